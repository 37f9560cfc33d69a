"""Real FFT pair on paired (re, im) arrays.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform; other
even lengths fall back to a direct DFT.  The differentiable ``rfft`` and
``irfft`` ops return / accept separate real and imaginary tensors so the
autodiff engine never sees a complex dtype.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import Tensor, _make, _wrap, get_dtype


class FFTConfigError(ValueError):
    """Raised for transform lengths the real FFT pair does not support."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, inverse: bool, dtype) -> tuple[np.ndarray, np.ndarray]:
    sign = 1.0 if inverse else -1.0
    ang = sign * 2.0 * np.pi * np.arange(size // 2) / size
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def fft_radix2(re: np.ndarray, im: np.ndarray, inverse: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised complex DFT over the last axis (length must be a power of two)."""
    n = re.shape[-1]
    if not _is_pow2(n):
        raise FFTConfigError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = re.shape[:-1]
    rev = _bit_reverse(n)
    re = re[..., rev]
    im = im[..., rev]
    size = 2
    while size <= n:
        half = size // 2
        wr, wi = _twiddles(size, inverse, re.dtype.type)
        re = re.reshape(lead + (n // size, size))
        im = im.reshape(lead + (n // size, size))
        a_re, b_re = re[..., :half], re[..., half:]
        a_im, b_im = im[..., :half], im[..., half:]
        t_re = wr * b_re - wi * b_im
        t_im = wr * b_im + wi * b_re
        re = np.concatenate([a_re + t_re, a_re - t_re], axis=-1).reshape(lead + (n,))
        im = np.concatenate([a_im + t_im, a_im - t_im], axis=-1).reshape(lead + (n,))
        size *= 2
    return re, im


@lru_cache(maxsize=None)
def _dft_basis(n: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    jk = np.outer(np.arange(n), np.arange(n // 2 + 1)) % n
    ang = 2.0 * np.pi * jk / n
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def _check_length(n: int) -> None:
    if n < 4 or n % 2:
        raise FFTConfigError(f"real FFT needs an even length >= 4, got {n}")


def rfft_array(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided spectrum of a real signal along the last axis."""
    n = x.shape[-1]
    _check_length(n)
    f = n // 2 + 1
    if _is_pow2(n):
        re, im = fft_radix2(x, np.zeros_like(x))
        return re[..., :f], im[..., :f]
    cos, sin = _dft_basis(n, x.dtype.type)
    return x @ cos, -(x @ sin)


def irfft_array(re: np.ndarray, im: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`rfft_array`; imaginary parts of DC and Nyquist are ignored."""
    _check_length(n)
    f = n // 2 + 1
    if re.shape[-1] != f or im.shape[-1] != f:
        raise FFTConfigError(f"spectrum has {re.shape[-1]} bins, expected {f} for length {n}")
    im = im.copy()
    im[..., 0] = 0.0
    im[..., -1] = 0.0
    if _is_pow2(n):
        full_re = np.concatenate([re, re[..., -2:0:-1]], axis=-1)
        full_im = np.concatenate([im, -im[..., -2:0:-1]], axis=-1)
        out_re, _ = fft_radix2(full_re, full_im, inverse=True)
        return out_re / n
    cos, sin = _dft_basis(n, re.dtype.type)
    weight = np.full(f, 2.0, dtype=re.dtype)
    weight[0] = weight[-1] = 1.0
    return ((re * weight) @ cos.T - (im * weight) @ sin.T) / n


def _end_weights(f: int, dtype, middle: float) -> np.ndarray:
    w = np.full(f, middle, dtype=dtype)
    w[0] = w[-1] = 1.0
    return w


def rfft(x) -> tuple[Tensor, Tensor]:
    """Differentiable one-sided real FFT over the last axis: returns (re, im)."""
    x = _wrap(x)
    n = x.shape[-1]
    re, im = rfft_array(x.data)
    f = re.shape[-1]
    packed = np.stack([re, im], axis=-2)

    def bw(g):
        # adjoint of the one-sided DFT is n * irfft with interior bins halved
        w = _end_weights(f, g.dtype, 0.5)
        x._accumulate(n * irfft_array(g[..., 0, :] * w, g[..., 1, :] * w, n))

    out = _make(packed, (x,), bw)
    return out[..., 0, :], out[..., 1, :]


def irfft(re, im, n: int) -> Tensor:
    """Differentiable inverse of :func:`rfft`."""
    re, im = _wrap(re), _wrap(im)
    out = irfft_array(re.data, im.data, n)
    f = n // 2 + 1

    def bw(g):
        g_re, g_im = rfft_array(g)
        w = _end_weights(f, g.dtype, 2.0) / n
        if re.requires_grad:
            re._accumulate(g_re * w)
        if im.requires_grad:
            gi = g_im * w
            gi[..., 0] = 0.0
            gi[..., -1] = 0.0
            im._accumulate(gi)

    return _make(out, (re, im), bw)


def naive_rdft(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """O(L^2) one-sided DFT in float64; the reference the fast path is checked against."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    cos, sin = _dft_basis(n, np.float64)
    return x @ cos, -(x @ sin)


def frequency_bins(n: int) -> np.ndarray:
    return np.arange(n // 2 + 1, dtype=get_dtype())
