"""Run configuration: one JSON document with ``model``, ``easd``, ``mop``,
``train`` and ``data`` sections, plus named presets."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ModelConfig:
    l_p: int = 64
    d_p: int = 256
    s: int = 6
    heads: int = 16
    d_ff: int = 256
    dropout: float = 0.2
    horizons: list[int] = field(default_factory=lambda: [24, 48, 96])


@dataclass
class EASDConfig:
    n_m: int = 4
    alpha: float | None = None  # None -> floor(F / 2)
    rho: float = 0.5
    temperature: float = 1.0
    q_init: float = 0.9
    eval_masks: str = "seeded"  # seeded | identity
    eval_seed: int = 0xEA5D
    mode: str = "full"  # full | multiband | patch (ablations, experimental)


@dataclass
class MoPConfig:
    i: int = 128
    d_h: int | None = None  # None -> d_p


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    warmup_steps: int = 100
    epochs_pretrain: int = 5
    epochs_tune: int = 10
    batch: int = 64
    patience: int = 6
    seed: int = 0


@dataclass
class DataConfig:
    l: int = 512
    stride: int | None = None  # None -> model.l_p
    manifest: str | None = None
    fewshot_fraction: float = 0.05


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    easd: EASDConfig = field(default_factory=EASDConfig)
    mop: MoPConfig = field(default_factory=MoPConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    # derived quantities
    @property
    def l(self) -> int:
        return self.data.l

    @property
    def n_freq(self) -> int:
        return self.data.l // 2 + 1

    @property
    def n_patches(self) -> int:
        return self.data.l // self.model.l_p

    @property
    def alpha(self) -> float:
        return float(self.n_freq // 2) if self.easd.alpha is None else float(self.easd.alpha)

    @property
    def d_h(self) -> int:
        return self.model.d_p if self.mop.d_h is None else self.mop.d_h

    @property
    def stride(self) -> int:
        return self.model.l_p if self.data.stride is None else self.data.stride

    @property
    def horizons(self) -> list[int]:
        return sorted(int(h) for h in self.model.horizons)

    def validate(self) -> "Config":
        m, e = self.model, self.easd
        L, F = self.data.l, self.n_freq
        if L < 4 or L % 2:
            raise ConfigError(f"data.l must be even and >= 4, got {L}")
        if L < m.l_p:
            raise ConfigError(f"data.l={L} is shorter than model.l_p={m.l_p}")
        if m.d_p % m.heads:
            raise ConfigError(f"model.d_p={m.d_p} not divisible by model.heads={m.heads}")
        if not m.horizons or any(h < 1 for h in m.horizons):
            raise ConfigError("model.horizons must be a nonempty list of positive ints")
        if len(set(m.horizons)) != len(m.horizons):
            raise ConfigError("model.horizons contains duplicates")
        if not 0.0 <= m.dropout < 1.0:
            raise ConfigError("model.dropout must be in [0, 1)")
        if e.n_m < 1:
            raise ConfigError("easd.n_m must be >= 1")
        if not 0.0 < self.alpha < F:
            raise ConfigError(f"easd.alpha must lie in (0, {F}), got {self.alpha}")
        if not 0.0 <= e.rho <= 1.0:
            raise ConfigError("easd.rho must be in [0, 1]")
        if e.temperature <= 0:
            raise ConfigError("easd.temperature must be positive")
        if not 0.0 < e.q_init < 1.0:
            raise ConfigError("easd.q_init must be in (0, 1)")
        if e.eval_masks not in ("seeded", "identity"):
            raise ConfigError("easd.eval_masks must be 'seeded' or 'identity'")
        if e.mode not in ("full", "multiband", "patch"):
            raise ConfigError("easd.mode must be one of full, multiband, patch")
        if self.train.warmup_steps < 1:
            raise ConfigError("train.warmup_steps must be >= 1")
        if self.stride < 1:
            raise ConfigError("data.stride must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        sections = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for name, section in d.items():
            if name not in sections:
                raise ConfigError(f"unknown config section {name!r}")
            sub_cls = {"model": ModelConfig, "easd": EASDConfig, "mop": MoPConfig,
                       "train": TrainConfig, "data": DataConfig}[name]
            known = {f.name for f in fields(sub_cls)}
            unknown = set(section) - known
            if unknown:
                raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
            kwargs[name] = sub_cls(**section)
        return cls(**kwargs).validate()


def tiny() -> Config:
    """Verification-sized model used by gradient checks and toy training."""
    return Config(
        model=ModelConfig(l_p=8, d_p=16, s=2, heads=2, d_ff=32, horizons=[8, 16, 32]),
        easd=EASDConfig(n_m=2),
        mop=MoPConfig(i=4),
        train=TrainConfig(warmup_steps=20, batch=32),
        data=DataConfig(l=32),
    ).validate()


def desk() -> Config:
    return Config().validate()


def full() -> Config:
    """Full-scale settings: horizons 96..720, 10k warmup, batch 2048."""
    return Config(
        model=ModelConfig(horizons=[96, 192, 336, 720]),
        train=TrainConfig(warmup_steps=10000, epochs_pretrain=10, epochs_tune=20, batch=2048),
    ).validate()


PRESETS = {"tiny": tiny, "desk": desk, "full": full}


def load_config(spec: str | os.PathLike | None) -> Config:
    """Load a preset name or a JSON file; ``SEMPO_SEED`` overrides ``train.seed``."""
    if spec is None:
        cfg = desk()
    elif str(spec) in PRESETS:
        cfg = PRESETS[str(spec)]()
    else:
        path = Path(spec)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = Config.from_dict(raw)
    seed = os.environ.get("SEMPO_SEED")
    if seed is not None:
        try:
            cfg = replace(cfg, train=replace(cfg.train, seed=int(seed)))
        except ValueError as exc:
            raise ConfigError(f"SEMPO_SEED must be an integer, got {seed!r}") from exc
    return cfg
