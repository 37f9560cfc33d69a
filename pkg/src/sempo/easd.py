"""Energy-aware spectral decomposition.

normalize -> rfft -> energy quantile threshold -> high/low energy split ->
independent band masks per branch -> fuse -> irfft.  All functions carry a
leading batch axis: windows are ``[B, L]``, spectra ``[B, F]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .fft import irfft, rfft
from .tensor import Tensor

STD_FLOOR = 1e-5


@dataclass
class NormStats:
    mean: np.ndarray  # [B]
    std: np.ndarray  # [B]

    def denormalize(self, y):
        """y * std + mean with stats broadcast over the trailing axis."""
        return T.add(T.mul(y, self.std[..., None]), self.mean[..., None])


@dataclass
class Spectrum:
    re: Tensor
    im: Tensor
    length: int


@dataclass
class PartitionedSpectrum:
    hec_re: Tensor
    hec_im: Tensor
    lec_re: Tensor
    lec_im: Tensor
    gate: Tensor


@dataclass
class MaskSamplerConfig:
    n_m: int = 4
    alpha: float = 1.0
    rho: float = 0.5

    def validate(self, n_freq: int) -> None:
        if self.n_m < 1:
            raise ValueError("n_m must be >= 1")
        if not 0.0 < self.alpha < n_freq:
            raise ValueError(f"alpha must lie in (0, {n_freq}), got {self.alpha}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")


@dataclass
class MaskBank:
    m_hec: np.ndarray  # [..., N_m, F] in {0, 1}
    m_lec: np.ndarray
    delta_hec: np.ndarray  # [..., N_m]
    dir_hec: np.ndarray
    delta_lec: np.ndarray
    dir_lec: np.ndarray


def instance_normalize(x: np.ndarray) -> tuple[np.ndarray, NormStats]:
    """Zero-mean / unit-std per window; std floored at 1e-5."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("cannot normalise an empty window")
    mu = x.mean(axis=-1)
    sd = np.maximum(x.std(axis=-1), STD_FLOOR)
    xn = (x - mu[..., None]) / sd[..., None]
    dt = T.get_dtype()
    return xn.astype(dt), NormStats(mean=mu.astype(dt), std=sd.astype(dt))


def spectral_energy(z: Spectrum) -> Tensor:
    return T.add(T.square(z.re), T.square(z.im))


def quantile_level(theta_q) -> Tensor:
    return T.sigmoid(theta_q)


def compute_threshold(energy, theta_q) -> Tensor:
    """tau = sigmoid(theta_q)-quantile of each window's energy vector."""
    return T.quantile(energy, T.reshape(quantile_level(theta_q), ()), axis=-1)


def partition(z: Spectrum, energy, tau, temperature: float, train: bool) -> PartitionedSpectrum:
    """Split ``z`` into high- and low-energy parts that sum back to ``z``.

    Train mode uses a sigmoid gate (differentiable in tau); eval mode the hard
    indicator energy > tau.
    """
    tau_b = T.expand_dims(tau, -1)
    if train:
        scale = T.mul(T.add(tau_b, 1e-8), temperature)
        gate = T.sigmoid(T.div(T.sub(energy, tau_b), scale))
    else:
        e = energy.data if isinstance(energy, Tensor) else np.asarray(energy)
        gate = Tensor((e > tau_b.data).astype(T.get_dtype()))
    hec_re = T.mul(z.re, gate)
    hec_im = T.mul(z.im, gate)
    return PartitionedSpectrum(
        hec_re=hec_re,
        hec_im=hec_im,
        lec_re=T.sub(z.re, hec_re),
        lec_im=T.sub(z.im, hec_im),
        gate=gate,
    )


def masks_from_draws(delta: np.ndarray, direction: np.ndarray, n_freq: int) -> np.ndarray:
    """Row i keeps bins j <= delta_i when direction_i == 1, else bins j >= delta_i."""
    f = np.arange(n_freq)
    delta = np.asarray(delta)[..., None]
    direction = np.asarray(direction)[..., None]
    keep = np.where(direction == 1, f <= delta, f >= delta)
    return keep.astype(T.get_dtype())


def sample_masks(cfg: MaskSamplerConfig, n_freq: int, rng: np.random.Generator,
                 batch_shape: tuple[int, ...] = ()) -> MaskBank:
    """Draw independent high- and low-energy mask banks."""
    cfg.validate(n_freq)
    shape = batch_shape + (cfg.n_m,)
    d_h = rng.uniform(0.0, cfg.alpha, size=shape)
    r_h = (rng.random(shape) < cfg.rho).astype(np.int8)
    d_l = rng.uniform(0.0, cfg.alpha, size=shape)
    r_l = (rng.random(shape) < cfg.rho).astype(np.int8)
    return MaskBank(
        m_hec=masks_from_draws(d_h, r_h, n_freq),
        m_lec=masks_from_draws(d_l, r_l, n_freq),
        delta_hec=d_h,
        dir_hec=r_h,
        delta_lec=d_l,
        dir_lec=r_l,
    )


def identity_masks(n_m: int, n_freq: int) -> MaskBank:
    ones = np.ones((n_m, n_freq), dtype=T.get_dtype())
    zeros = np.zeros(n_m)
    return MaskBank(ones, ones.copy(), zeros, zeros.astype(np.int8), zeros, zeros.astype(np.int8))


def apply_and_fuse(part: PartitionedSpectrum, bank: MaskBank, length: int) -> Tensor:
    """irfft(Z_hec * M_hec + Z_lec * M_lec) for every mask row -> [B, N_m, L]."""

    def branch(re, im, m):
        return T.mul(T.expand_dims(re, -2), m), T.mul(T.expand_dims(im, -2), m)

    h_re, h_im = branch(part.hec_re, part.hec_im, bank.m_hec)
    l_re, l_im = branch(part.lec_re, part.lec_im, bank.m_lec)
    return irfft(T.add(h_re, l_re), T.add(h_im, l_im), length)


def _patch_mask_views(xn: np.ndarray, n_m: int, l_p: int, rng: np.random.Generator) -> np.ndarray:
    # time-domain ablation: each view zeroes a random ~25% of patches
    b, length = xn.shape
    n_p = max(length // l_p, 1)
    drop = rng.random((b, n_m, n_p)) < 0.25
    keep = np.repeat(~drop, l_p, axis=-1)[..., :length]
    if keep.shape[-1] < length:
        keep = np.pad(keep, ((0, 0), (0, 0), (0, length - keep.shape[-1])), constant_values=True)
    return xn[:, None, :] * keep


def easd_forward(x: np.ndarray, theta_q, cfg, rng: np.random.Generator | None,
                 train: bool, return_parts: bool = False):
    """Full decomposition of raw windows ``x`` ([B, L]) into masked views.

    Returns ``(X_mask [B, N_m, L], NormStats)``; with ``return_parts`` also a
    dict holding the spectrum, threshold, partition and mask bank.
    """
    x = np.atleast_2d(np.asarray(x))
    b, length = x.shape
    if length != cfg.l:
        raise ValueError(f"window length {length} != configured L={cfg.l}")
    e = cfg.easd
    xn, stats = instance_normalize(x)
    n_freq = length // 2 + 1

    if e.mode == "patch":
        if rng is None or not train:
            rng = np.random.default_rng(e.eval_seed)
        views = Tensor(_patch_mask_views(xn, e.n_m, cfg.model.l_p, rng))
        return (views, stats, {}) if return_parts else (views, stats)

    re, im = rfft(Tensor(xn))
    z = Spectrum(re, im, length)
    energy = spectral_energy(z)
    tau = compute_threshold(energy, theta_q)
    part = partition(z, energy, tau, e.temperature, train)

    sampler = MaskSamplerConfig(n_m=e.n_m, alpha=cfg.alpha, rho=e.rho)
    if train:
        if rng is None:
            raise ValueError("train-mode EASD needs an rng")
        bank = sample_masks(sampler, n_freq, rng, batch_shape=(b,))
    elif e.eval_masks == "identity":
        bank = identity_masks(e.n_m, n_freq)
    else:
        bank = sample_masks(sampler, n_freq, np.random.default_rng(e.eval_seed))

    if e.mode == "multiband":
        # no energy split: one mask bank on the whole spectrum
        bank = MaskBank(bank.m_hec, bank.m_hec, bank.delta_hec, bank.dir_hec,
                        bank.delta_hec, bank.dir_hec)

    views = apply_and_fuse(part, bank, length)
    if return_parts:
        return views, stats, {"spectrum": z, "energy": energy, "tau": tau,
                              "partition": part, "bank": bank}
    return views, stats


def init_theta_q(q_init: float) -> float:
    return float(np.log(q_init / (1.0 - q_init)))
