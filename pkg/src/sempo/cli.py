"""Command-line interface: ``sempo <command> [options]``.

Exit codes: 0 success, 1 other runtime failure, 2 usage error (unknown flag,
bad value), 3 missing input file, 4 config/checkpoint incompatibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import Config, ConfigError, load_config
from .data import (
    DataFormatError,
    WindowSpec,
    channel_split,
    chronological_split,
    few_shot_subset,
    load_csv,
    make_windows,
    read_manifest,
    registry_windows,
    split_train_val,
)
from .forecast import autoregressive_forecast, build_report, evaluate_table, greedy_schedule
from .gradcheck import check_losses
from .model import SEMPO
from .training import DataError, run_stage

log = logging.getLogger("sempo")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MISSING, EXIT_INCOMPATIBLE = 0, 1, 2, 3, 4


class Incompatible(Exception):
    """Checkpoint and config (or data) cannot be combined."""


def _sig6(v: float | None) -> float | None:
    return None if v is None else float(f"{v:.6g}")


def _require(path: str | None, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


# the sections that fix tensor shapes; train settings may change between stages
_ARCH_SECTIONS = ("model", "easd", "mop")


def _check_compatible(ckpt_cfg: Config, cfg: Config) -> None:
    a, b = ckpt_cfg.to_dict(), cfg.to_dict()
    diffs = [f"{s}.{k}" for s in _ARCH_SECTIONS for k in a[s] if a[s][k] != b[s].get(k)]
    if ckpt_cfg.l != cfg.l:
        diffs.append("data.l")
    if diffs:
        raise Incompatible("config disagrees with checkpoint on " + ", ".join(diffs))


def _spec(cfg: Config) -> WindowSpec:
    return WindowSpec(l=cfg.l, horizons=cfg.horizons, stride=cfg.stride)


def _fit(model: SEMPO, stage: str, windows, weights, epochs, max_steps, seed: int):
    if len(windows) < 10:
        raise DataError(f"{stage}: only {len(windows)} windows; need at least 10")
    train, val = split_train_val(list(range(len(windows))), seed)
    tw = [windows[i] for i in train]
    vw = [windows[i] for i in val]
    w = None if weights is None else np.asarray(weights)[train]
    res = run_stage(model, stage, tw, vw, epochs=epochs, max_steps=max_steps,
                    rng=np.random.default_rng(seed), sample_weights=w,
                    on_step=lambda r: log.debug("step %d loss %.5f", r.step, r.train_loss))
    print(f"{stage}: {res.steps} steps, best val {res.best_val:.6g}"
          + (" (early stop)" if res.stopped_early else ""))
    return res


# ---------------------------------------------------------------- commands


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    entries = read_manifest(_require(args.manifest, "manifest"))
    for e in entries:
        _require(e.path, "dataset")
    windows, weights = registry_windows(entries, _spec(cfg), with_future=False)
    model = SEMPO(cfg)
    res = _fit(model, "pretrain", windows, weights, args.epochs, args.max_steps, cfg.train.seed)
    save_checkpoint(model, args.out, opt=res.optimizer)
    return EXIT_OK


def cmd_tune(args) -> int:
    model = load_checkpoint(_require(args.ckpt, "checkpoint"))
    if args.config:
        cfg = load_config(args.config)
        _check_compatible(model.config, cfg)
        model.config = cfg
    cfg = model.config
    entries = read_manifest(_require(args.manifest, "manifest"))
    for e in entries:
        _require(e.path, "dataset")
    windows, weights = registry_windows(entries, _spec(cfg), with_future=True)
    res = _fit(model, "mop_tune", windows, weights, args.epochs, args.max_steps, cfg.train.seed)
    save_checkpoint(model, args.out, opt=res.optimizer)
    return EXIT_OK


def cmd_finetune(args) -> int:
    model = _tuned(args.ckpt)
    cfg = model.config
    table = load_csv(_require(args.data, "data file"))
    windows = []
    for s in channel_split(table):
        train_part, _, _ = chronological_split(s.values)
        s = replace(s, values=train_part)
        windows.extend(make_windows(s, _spec(cfg), with_future=True))
    if not windows:
        raise Incompatible(f"{table.name}: series too short for L={cfg.l} plus {max(cfg.horizons)} future steps")
    subset = few_shot_subset(windows, args.fraction)
    print(f"few-shot: {len(subset)} of {len(windows)} windows")
    res = _fit(model, "few_shot", subset, None, args.epochs, args.max_steps, cfg.train.seed)
    save_checkpoint(model, args.out, opt=res.optimizer)
    return EXIT_OK


def _tuned(path: str) -> SEMPO:
    model = load_checkpoint(_require(path, "checkpoint"))
    if model.stage in ("init", "pretrain"):
        raise Incompatible(f"{path}: stage {model.stage!r} has no tuned prediction heads")
    return model


def cmd_forecast(args) -> int:
    model = _tuned(args.ckpt)
    table = load_csv(_require(args.data, "data file"))
    if table.length < model.config.l:
        raise Incompatible(f"{table.name}: {table.length} rows, model needs a context of {model.config.l}")
    schedule = greedy_schedule(args.horizon, model.config.horizons)
    print("schedule: " + " ".join(
        str(s.head) if s.emitted == s.head else f"{s.head}->{s.emitted}" for s in schedule))
    series = channel_split(table)
    ctx = np.stack([s.values[-model.config.l:] for s in series])
    pred = np.atleast_2d(autoregressive_forecast(model, ctx, args.horizon))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "step", "value"])
        for s, row in zip(series, pred):
            for i, v in enumerate(row, start=1):
                w.writerow([s.column, i, f"{v:.6g}"])
    print(f"wrote {pred.size} forecasts to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _tuned(args.ckpt)
    horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    results = {}
    for path in args.data:
        table = load_csv(_require(path, "data file"))
        results[table.name] = evaluate_table(model, table, horizons, season=args.season,
                                             test_fraction=args.test_fraction)
    report = {k: _sig6(v) for k, v in build_report(results).items()}
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for k, v in report.items():
        if ".avg." in k:
            print(f"{k} = {v}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    stages = ("pretrain", "mop_tune") if args.stage == "all" else (args.stage,)
    reports = check_losses(cfg, seed=cfg.train.seed, stages=stages)
    ok = True
    for stage, rep in reports.items():
        print(f"[{stage}] " + rep.summary(args.top))
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def gating_histogram(model: SEMPO, x: np.ndarray, bins: int = 20) -> list[tuple[str, float, float, int]]:
    """Histogram of MoP routing scores for encoder and decoder tokens."""
    with T.no_grad():
        out = model.forward(x, None, train=False, use_prompts=True, reconstruct_series=False, horizons=[])
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for side, scores in (("encoder", out.enc_scores), ("decoder", out.dec_scores)):
        counts, _ = np.histogram(np.asarray(scores.data).ravel(), bins=edges)
        rows.extend((side, float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    return rows


def cmd_inspect(args) -> int:
    model = load_checkpoint(_require(args.ckpt, "checkpoint"))
    counts = model.count_parameters()
    print(f"stage: {model.stage}")
    print("parameters:")
    for k, v in counts.items():
        print(f"  {k:<22s}{v:>12,d}")
    print("config:")
    print(model.config.to_json())
    if args.data:
        table = load_csv(_require(args.data, "data file"))
        x = np.stack([w.context for s in channel_split(table)
                      for w in make_windows(s, _spec(model.config), with_future=False)])
        if x.size == 0:
            raise Incompatible(f"{table.name}: series shorter than L={model.config.l}")
    else:
        x = np.random.default_rng(model.seed).normal(size=(16, model.config.l)).cumsum(axis=1)
    rows = gating_histogram(model, x, args.bins)
    if args.histogram:
        with open(args.histogram, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "bin_lo", "bin_hi", "count"])
            w.writerows(rows)
        print(f"gating histogram ({len(rows)} bins) written to {args.histogram}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _fraction(s: str) -> float:
    v = float(s)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sempo", description="Lightweight spectral time-series foundation model.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def budget(sp):
        sp.add_argument("--epochs", type=_positive_int, default=None)
        sp.add_argument("--max-steps", type=_positive_int, default=None)

    sp = sub.add_parser("pretrain", help="stage-1 energy-aware pre-training")
    sp.add_argument("--config", default="desk", help="preset name (tiny/desk/full) or JSON file")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    budget(sp)
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("tune", help="stage-2 mixture-of-prompts tuning")
    sp.add_argument("--config", default=None)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", required=True)
    budget(sp)
    sp.set_defaults(fn=cmd_tune)

    sp = sub.add_parser("finetune", help="few-shot tuning on one dataset")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--fraction", type=_fraction, default=0.05)
    sp.add_argument("--out", required=True)
    budget(sp)
    sp.set_defaults(fn=cmd_finetune)

    sp = sub.add_parser("forecast", help="forecast every column of a CSV")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--horizon", type=_positive_int, required=True)
    sp.add_argument("--out", default="forecast.csv")
    sp.set_defaults(fn=cmd_forecast)

    sp = sub.add_parser("eval", help="rolling-origin evaluation report")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True, nargs="+")
    sp.add_argument("--horizons", default="96,192,336,720")
    sp.add_argument("--season", type=_positive_int, default=1)
    sp.add_argument("--test-fraction", type=_fraction, default=0.2)
    sp.add_argument("--report", default="report.json")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference check of both training losses")
    sp.add_argument("--config", default="tiny")
    sp.add_argument("--stage", choices=("pretrain", "mop_tune", "all"), default="all")
    sp.add_argument("--top", type=_positive_int, default=5)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("inspect", help="parameter counts, config and gating histogram")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", default=None, help="CSV to route (default: seeded random walks)")
    sp.add_argument("--bins", type=_positive_int, default=20)
    sp.add_argument("--histogram", default=None, help="write gating histogram CSV here")
    sp.set_defaults(fn=cmd_inspect)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (Incompatible, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (DataFormatError, DataError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
