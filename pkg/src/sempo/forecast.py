"""Arbitrary-horizon forecasting by greedy head scheduling, plus evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import SeriesTable, channel_split
from .metrics import METRICS, all_metrics
from .model import SEMPO


@dataclass(frozen=True)
class ScheduleSegment:
    head: int
    emitted: int


def greedy_schedule(horizon: int, heads) -> list[ScheduleSegment]:
    """Largest head that fits the remainder, repeatedly; if none fits, the
    smallest head truncated to the remainder ends the schedule."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    heads = sorted(set(int(h) for h in heads))
    if not heads:
        raise ValueError("no prediction heads configured")
    out, remaining = [], horizon
    while remaining > 0:
        fitting = [h for h in heads if h <= remaining]
        if fitting:
            out.append(ScheduleSegment(fitting[-1], fitting[-1]))
            remaining -= fitting[-1]
        else:
            out.append(ScheduleSegment(heads[0], remaining))
            remaining = 0
    return out


def autoregressive_forecast(model: SEMPO, context, horizon: int) -> np.ndarray:
    """Forecast ``horizon`` steps after ``context`` (last L values are used).

    Accepts a single series ``[n]`` or a batch ``[B, n]``.  Each schedule
    segment re-normalises its own rolling context.
    """
    L = model.config.l
    ctx = np.asarray(context, dtype=np.float64)
    single = ctx.ndim == 1
    ctx = np.atleast_2d(ctx)
    if ctx.shape[-1] < L:
        raise ValueError(f"context has {ctx.shape[-1]} points; model needs L={L}")
    ctx = ctx[:, -L:]
    if model.stage in ("init", "pretrain"):
        raise RuntimeError(f"model has no tuned prediction heads (stage {model.stage!r})")
    pieces = []
    with T.no_grad():
        for seg in greedy_schedule(horizon, model.config.horizons):
            out = model.forward(ctx, None, train=False, use_prompts=True, reconstruct_series=False,
                                horizons=[seg.head])
            step = np.asarray(out.preds[seg.head].data, dtype=np.float64)[:, : seg.emitted]
            pieces.append(step)
            ctx = np.concatenate([ctx, step], axis=1)[:, -L:]
    y = np.concatenate(pieces, axis=1)
    return y[0] if single else y


def naive_last_value(context, horizon: int) -> np.ndarray:
    ctx = np.atleast_1d(np.asarray(context, dtype=np.float64))
    return np.repeat(ctx[..., -1:], horizon, axis=-1)


def evaluation_windows(values: np.ndarray, L: int, horizon: int, test_fraction: float = 0.2,
                       stride: int | None = None) -> list[int]:
    """Forecast origins inside the trailing test span (context may reach back before it)."""
    n = len(values)
    first = max(L, n - max(int(round(n * test_fraction)), horizon))
    stride = stride or horizon
    return list(range(first, n - horizon + 1, stride))


def evaluate_table(model: SEMPO, table: SeriesTable, horizons, season: int = 1,
                   test_fraction: float = 0.2, stride: int | None = None, batch: int = 64) -> dict:
    """Per-horizon metrics averaged over every (column, origin) pair."""
    L = model.config.l
    per_h: dict[int, dict[str, float | None]] = {}
    for h in horizons:
        sums = {k: [] for k in METRICS}
        for s in channel_split(table):
            origins = evaluation_windows(s.values, L, h, test_fraction, stride)
            for i in range(0, len(origins), batch):
                chunk = origins[i : i + batch]
                ctx = np.stack([s.values[o - L : o] for o in chunk])
                pred = autoregressive_forecast(model, ctx, h)
                for o, yhat in zip(chunk, pred):
                    m = all_metrics(s.values[o : o + h], yhat, s.values[o - L : o], season)
                    for k, v in m.items():
                        if v is not None:
                            sums[k].append(v)
        per_h[h] = {k: (float(np.mean(v)) if v else None) for k, v in sums.items()}
    return per_h


def build_report(results: dict[str, dict[int, dict]]) -> dict[str, float | None]:
    """Flatten ``{dataset: {horizon: {metric: value}}}`` into ``dataset.hH.metric`` keys
    plus ``dataset.avg.metric`` means over the horizon grid."""
    flat: dict[str, float | None] = {}
    for ds in sorted(results):
        per_h = results[ds]
        for h in sorted(per_h):
            for k in METRICS:
                flat[f"{ds}.h{h}.{k}"] = per_h[h].get(k)
        for k in METRICS:
            vals = [per_h[h][k] for h in per_h if per_h[h].get(k) is not None]
            flat[f"{ds}.avg.{k}"] = float(np.mean(vals)) if vals else None
    return flat
