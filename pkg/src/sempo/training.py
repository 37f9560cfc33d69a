"""Two-stage optimisation: reconstruction pretraining and MoP tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .model import MOP_PREFIX, PRED_HEAD_PREFIX, SEMPO
from .nn import ModelParams
from .tensor import Parameter, Tape, Tensor

log = logging.getLogger(__name__)

STAGES = ("pretrain", "mop_tune", "few_shot")


class DataError(ValueError):
    pass


# ---------------------------------------------------------------- stages


def stage_trainable(stage: str) -> Callable[[str], bool]:
    if stage == "pretrain":
        return lambda name: not (name.startswith(MOP_PREFIX) or name.startswith(PRED_HEAD_PREFIX))
    if stage in ("mop_tune", "few_shot"):
        return lambda name: name.startswith(MOP_PREFIX) or name.startswith(PRED_HEAD_PREFIX)
    raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")


def configure_stage(model: SEMPO, stage: str) -> None:
    """Set trainable flags for ``stage`` and switch prompt injection on/off."""
    model.params.set_trainable(stage_trainable(stage))
    model.stage = stage


# ---------------------------------------------------------------- losses


def mse_loss(pred, target) -> Tensor:
    diff = T.sub(pred, np.asarray(target, dtype=T.get_dtype()))
    return T.mean(T.square(diff))


def pretrain_loss(model: SEMPO, context: np.ndarray, rng: np.random.Generator | None,
                  train: bool = True) -> Tensor:
    """Reconstruction MSE between raw windows and their reconstruction."""
    out = model.forward(context, rng, train=train, use_prompts=False)
    return mse_loss(out.recon, np.atleast_2d(context))


def tune_components(model: SEMPO, context: np.ndarray, future: np.ndarray,
                    rng: np.random.Generator | None, train: bool = True) -> dict:
    horizons = model.config.horizons
    future = np.atleast_2d(future)
    if future.shape[-1] < max(horizons):
        raise DataError(f"future has {future.shape[-1]} steps; need {max(horizons)} for the longest head")
    out = model.forward(context, rng, train=train, use_prompts=True)
    parts = {h: mse_loss(out.preds[h], future[:, :h]) for h in horizons}
    parts["recon"] = mse_loss(out.recon, np.atleast_2d(context))
    return parts


def tune_loss(model: SEMPO, context: np.ndarray, future: np.ndarray,
              rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Sum of per-horizon forecast MSEs plus reconstruction MSE."""
    parts = tune_components(model, context, future, rng, train)
    total = None
    for v in parts.values():
        total = v if total is None else T.add(total, v)
    return total


def stage_loss(model: SEMPO, stage: str, context, future, rng, train: bool = True) -> Tensor:
    if stage == "pretrain":
        return pretrain_loss(model, context, rng, train)
    return tune_loss(model, context, future, rng, train)


# ---------------------------------------------------------------- optimiser


@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, tc) -> "OptimizerState":
        return cls(lr=tc.lr, weight_decay=tc.weight_decay, beta1=tc.beta1, beta2=tc.beta2, eps=tc.eps)


def adamw_step(params: Sequence[Parameter], opt: OptimizerState, lr_t: float) -> None:
    """Decoupled-weight-decay Adam update of every trainable parameter, in place."""
    opt.t += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.t
    c2 = 1.0 - b2**opt.t
    for p in params:
        if not p.trainable:
            continue
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = opt.m.get(p.name)
        if m is None:
            m = opt.m[p.name] = np.zeros_like(p.data)
            opt.v[p.name] = np.zeros_like(p.data)
        v = opt.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = (m / c1) / (np.sqrt(v / c2) + opt.eps) + opt.weight_decay * p.data
        p.data = (p.data - lr_t * step).astype(p.data.dtype)


@dataclass
class Schedule:
    lr_max: float = 1e-3
    warmup_steps: int = 100


def lr_at(step: int, sched: Schedule) -> float:
    """Linear warmup to lr_max, constant afterwards."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return sched.lr_max * min(1.0, step / sched.warmup_steps)


# ---------------------------------------------------------------- early stopping


@dataclass
class EarlyStopState:
    patience: int = 6
    best: float = math.inf
    since_improvement: int = 0

    def update(self, val_loss: float) -> bool:
        """Record an epoch's validation loss; return True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.since_improvement = 0
        else:
            self.since_improvement += 1
        return self.since_improvement > self.patience


# ---------------------------------------------------------------- loop


@dataclass
class LogRecord:
    step: int
    epoch: int
    lr: float
    train_loss: float
    val_loss: float | None = None


@dataclass
class StageResult:
    log: list[LogRecord]
    best_val: float | None
    stopped_early: bool
    steps: int
    optimizer: OptimizerState


def _stack(windows, attr: str) -> np.ndarray:
    return np.stack([getattr(w, attr) for w in windows]).astype(np.float64)


def evaluate_loss(model: SEMPO, stage: str, windows, batch: int) -> float:
    """Mean stage loss in eval mode (hard gate, fixed masks, no dropout)."""
    if not windows:
        return math.nan
    total, count = 0.0, 0
    with T.no_grad():
        for i in range(0, len(windows), batch):
            chunk = windows[i : i + batch]
            ctx = _stack(chunk, "context")
            fut = _stack(chunk, "future") if stage != "pretrain" else None
            loss = stage_loss(model, stage, ctx, fut, None, train=False)
            total += float(loss.data) * len(chunk)
            count += len(chunk)
    return total / count


def train_step(model: SEMPO, stage: str, opt: OptimizerState, ctx, fut, rng, lr_t: float) -> float:
    params = model.params
    trainable = params.trainable()
    for p in trainable:
        p.zero_grad()
    with Tape() as tape:
        loss = stage_loss(model, stage, ctx, fut, rng, train=True)
        tape.backward(loss, trainable)
    adamw_step(trainable, opt, lr_t)
    return float(loss.data)


def run_stage(
    model: SEMPO,
    stage: str,
    train_windows,
    val_windows=None,
    epochs: int | None = None,
    sched: Schedule | None = None,
    rng: np.random.Generator | None = None,
    opt: OptimizerState | None = None,
    max_steps: int | None = None,
    batch: int | None = None,
    sample_weights: np.ndarray | None = None,
    on_step: Callable[[LogRecord], None] | None = None,
) -> StageResult:
    """Epoch loop with per-epoch validation, early stopping and best-weight retention."""
    tc = model.config.train
    if not train_windows:
        raise DataError("empty training set")
    configure_stage(model, stage)
    if epochs is None:
        epochs = tc.epochs_pretrain if stage == "pretrain" else tc.epochs_tune
    sched = sched or Schedule(lr_max=tc.lr, warmup_steps=tc.warmup_steps)
    rng = rng if rng is not None else np.random.default_rng(tc.seed)
    opt = opt or OptimizerState.from_config(tc)
    batch = batch or tc.batch
    stopper = EarlyStopState(patience=tc.patience)
    records: list[LogRecord] = []
    best_state = None
    stopped = False
    steps = 0
    n = len(train_windows)
    if stage != "pretrain":
        need = max(model.config.horizons)
        if any(w.future is None or len(w.future) < need for w in train_windows):
            raise DataError(f"{stage} needs windows with at least {need} future steps")

    for epoch in range(epochs):
        if sample_weights is not None:
            p = np.asarray(sample_weights, dtype=np.float64)
            order = rng.choice(n, size=n, replace=True, p=p / p.sum())
        else:
            order = rng.permutation(n)
        for i in range(0, n, batch):
            if max_steps is not None and steps >= max_steps:
                break
            chunk = [train_windows[j] for j in order[i : i + batch]]
            ctx = _stack(chunk, "context")
            fut = _stack(chunk, "future") if stage != "pretrain" else None
            lr_t = lr_at(opt.t + 1, sched)
            loss = train_step(model, stage, opt, ctx, fut, rng, lr_t)
            steps += 1
            rec = LogRecord(step=opt.t, epoch=epoch, lr=lr_t, train_loss=loss)
            records.append(rec)
            if on_step:
                on_step(rec)
        val = evaluate_loss(model, stage, val_windows, batch) if val_windows else records[-1].train_loss
        records[-1].val_loss = val
        log.info("%s epoch %d step %d train %.5f val %.5f", stage, epoch, opt.t, records[-1].train_loss, val)
        improved = val < stopper.best
        if stopper.update(val):
            stopped = True
            break
        if improved:
            best_state = model.params.state()
        if max_steps is not None and steps >= max_steps:
            break

    if best_state is not None:
        model.params.load_state(best_state)
    return StageResult(
        log=records,
        best_val=None if math.isinf(stopper.best) else stopper.best,
        stopped_early=stopped,
        steps=steps,
        optimizer=opt,
    )


def snapshot(params: ModelParams) -> dict[str, bytes]:
    """Byte images of every tensor, for freeze-contract comparisons."""
    return {p.name: p.data.tobytes() for p in params}


def changed_tensors(before: dict[str, bytes], params: ModelParams) -> set[str]:
    return {p.name for p in params if p.data.tobytes() != before[p.name]}
