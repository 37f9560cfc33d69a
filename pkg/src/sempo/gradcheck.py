"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tape, Tensor


@dataclass
class ParamReport:
    name: str
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple[int, ...]
    checked: int


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str | None
    tol: float
    entries: list[ParamReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def summary(self, top: int = 5) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} max_rel_err={self.max_rel_err:.3e} (tol {self.tol:.0e}) worst={self.worst_param}"]
        for e in self.entries[:top]:
            lines.append(f"  {e.name:<40s} rel={e.max_rel_err:.3e} abs={e.max_abs_err:.3e} n={e.checked}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter | Tensor],
    h: float = 1e-5,
    tol: float = 1e-5,
    floor: float = 1e-5,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare autodiff gradients of ``f()`` against central differences.

    ``f`` must be deterministic (re-seed any rng inside it).  The global dtype
    must be float64.  Relative error is ``|a - n| / max(|a|, |n|, floor * max(1, |f|))``:
    coordinates with gradients far below the loss scale, where central
    differences only resolve roundoff, are compared on that absolute scale.
    """
    if T.get_dtype() is not np.float64:
        raise RuntimeError("grad_check requires 64-bit mode (use tensor.precision(np.float64))")
    params = list(params)
    if names is None:
        names = [getattr(p, "name", f"param{i}") for i, p in enumerate(params)]

    for p in params:
        p.grad = np.zeros_like(p.data)
    with Tape() as tape:
        loss = f()
        tape.backward(loss, [p for p in params if isinstance(p, Parameter)])
    scale = floor * max(1.0, abs(float(loss.data)))
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    entries = []
    with T.no_grad():
        for p, name, a in zip(params, names, analytic):
            flat = p.data.reshape(-1)
            numeric = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f().data)
                flat[i] = orig - h
                fm = float(f().data)
                flat[i] = orig
                numeric[i] = (fp - fm) / (2.0 * h)
            a_flat = a.reshape(-1)
            rel = relative_error(a_flat, numeric, scale)
            worst = int(np.argmax(rel)) if rel.size else 0
            entries.append(
                ParamReport(
                    name=name,
                    max_rel_err=float(rel[worst]) if rel.size else 0.0,
                    max_abs_err=float(np.max(np.abs(a_flat - numeric))) if rel.size else 0.0,
                    worst_index=tuple(int(i) for i in np.unravel_index(worst, p.shape)) if rel.size else (),
                    checked=flat.size,
                )
            )
    entries.sort(key=lambda e: e.max_rel_err, reverse=True)
    worst_entry = entries[0] if entries else None
    return GradCheckReport(
        max_rel_err=worst_entry.max_rel_err if worst_entry else 0.0,
        worst_param=worst_entry.name if worst_entry else None,
        tol=tol,
        entries=entries,
    )


def check_losses(config, seed: int = 0, stages=("pretrain", "mop_tune")) -> dict[str, GradCheckReport]:
    """Grad-check the full reconstruction and tuning losses of a fresh model.

    Runs in 64-bit mode on one random-walk window; the loss rng is re-seeded
    on every evaluation so masks and dropout are identical across probes.
    """
    from .model import SEMPO
    from .training import configure_stage, pretrain_loss, tune_loss

    reports = {}
    with T.precision(np.float64):
        model = SEMPO(config, seed=seed)
        data_rng = np.random.default_rng(seed)
        L, H = config.l, max(config.horizons)
        x = np.cumsum(data_rng.normal(size=(1, L + H)), axis=1)
        ctx, fut = x[:, :L], x[:, L:]
        for stage in stages:
            configure_stage(model, stage)
            if stage == "pretrain":
                f = lambda: pretrain_loss(model, ctx, np.random.default_rng(seed + 5), train=True)  # noqa: E731
            else:
                f = lambda: tune_loss(model, ctx, fut, np.random.default_rng(seed + 5), train=True)  # noqa: E731
            reports[stage] = grad_check(f, model.params.trainable())
    return reports
