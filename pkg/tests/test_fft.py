import numpy as np
import pytest

from conftest import naive_dft, naive_idft
from sempo import tensor as T
from sempo.fft import FFTConfigError, fft_radix2, irfft, irfft_array, naive_rdft, rfft, rfft_array
from sempo.tensor import Parameter, Tape


def test_unit_impulse():
    re, im = rfft_array(np.array([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(re, [1, 1, 1])
    np.testing.assert_allclose(im, [0, 0, 0], atol=1e-12)


def test_constant_is_dc_only():
    c, n = 2.5, 16
    re, im = rfft_array(np.full(n, c))
    assert re[0] == pytest.approx(c * n)
    np.testing.assert_allclose(re[1:], 0, atol=1e-5)
    np.testing.assert_allclose(im, 0, atol=1e-5)


def test_matches_scalar_loop_dft(rng):
    x = rng.normal(size=64)
    re, im = rfft_array(x)
    want_re, want_im = naive_dft(x)
    np.testing.assert_allclose(re, want_re, atol=1e-9)
    np.testing.assert_allclose(im, want_im, atol=1e-9)


def test_length_512_relative_norm(rng):
    x = rng.normal(size=(8, 512)).astype(np.float32)
    re, im = rfft_array(x)
    ore, oim = naive_rdft(x)
    err = np.linalg.norm(np.concatenate([re - ore, im - oim], -1), axis=-1)
    ref = np.linalg.norm(np.concatenate([ore, oim], -1), axis=-1)
    assert np.max(err / ref) < 1e-4


def test_non_power_of_two_even_length(rng):
    x = rng.normal(size=12)
    re, im = rfft_array(x)
    want_re, want_im = naive_dft(x)
    np.testing.assert_allclose(re, want_re, atol=1e-9)
    np.testing.assert_allclose(im, want_im, atol=1e-9)
    np.testing.assert_allclose(irfft_array(re, im, 12), x, atol=1e-9)


def test_zero_spectrum():
    np.testing.assert_array_equal(irfft_array(np.zeros(5), np.zeros(5), 8), np.zeros(8))


def test_single_bin_cosine():
    re = np.zeros(5)
    re[1] = 1.0
    j = np.arange(8)
    np.testing.assert_allclose(irfft_array(re, np.zeros(5), 8), 2 / 8 * np.cos(2 * np.pi * j / 8), atol=1e-12)


def test_irfft_matches_scalar_loop(rng):
    re, im = rng.normal(size=9), rng.normal(size=9)
    np.testing.assert_allclose(irfft_array(re, im, 16), naive_idft(re, im, 16), atol=1e-9)


def test_complex_fft_matches_dft(rng):
    n = 16
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    k = np.arange(n)
    want = np.exp(-2j * np.pi * np.outer(k, k) / n) @ z
    re, im = fft_radix2(z.real, z.imag)
    np.testing.assert_allclose(re + 1j * im, want, atol=1e-9)


@pytest.mark.parametrize("n", [3, 7, 2])
def test_bad_length(n):
    with pytest.raises(FFTConfigError):
        rfft_array(np.zeros(n))


def test_rfft_gradient_fd(f64, rng):
    x0 = rng.normal(size=8)
    wr, wi = rng.normal(size=5), rng.normal(size=5)

    def f(x):
        re, im = rfft(x)
        return T.add(T.sum_(T.mul(re, wr)), T.sum_(T.mul(im, wi)))

    p = Parameter("x", x0.copy())
    with Tape() as tape:
        tape.backward(f(p), [p])
    h = 1e-6
    num = [(f(x0 + h * e).item() - f(x0 - h * e).item()) / (2 * h) for e in np.eye(8)]
    np.testing.assert_allclose(p.grad, num, atol=1e-7)


def test_irfft_gradient_fd(f64, rng):
    re0, im0 = rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=8)

    def f(re, im):
        return T.sum_(T.mul(irfft(re, im, 8), w))

    pr, pi = Parameter("re", re0.copy()), Parameter("im", im0.copy())
    with Tape() as tape:
        tape.backward(f(pr, pi), [pr, pi])
    h = 1e-6
    num_re = [(f(re0 + h * e, im0).item() - f(re0 - h * e, im0).item()) / (2 * h) for e in np.eye(5)]
    num_im = [(f(re0, im0 + h * e).item() - f(re0, im0 - h * e).item()) / (2 * h) for e in np.eye(5)]
    np.testing.assert_allclose(pr.grad, num_re, atol=1e-7)
    np.testing.assert_allclose(pi.grad, num_im, atol=1e-7)
