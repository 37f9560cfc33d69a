import numpy as np
import pytest

from sempo import tensor as T
from sempo.nn import rms_norm, swiglu_ffn
from sempo.tensor import Parameter, Tape


def grad_of(f, *values):
    """Run f on fresh parameters under a tape and return their gradients."""
    ps = [Parameter(f"p{i}", np.asarray(v, dtype=np.float64)) for i, v in enumerate(values)]
    with Tape() as tape:
        loss = f(*ps)
        tape.backward(loss, ps)
    return [p.grad for p in ps]


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(np.eye(2), a).data, a)

    def test_zero(self):
        out = T.matmul(np.array([[1.0, 2.0]]), np.zeros((2, 1)))
        np.testing.assert_array_equal(out.data, [[0.0]])

    def test_triple_loop_oracle(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        want = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    want[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(T.matmul(a, b).data, want, atol=1e-6)

    def test_shape_error_names_both(self):
        with pytest.raises(T.ShapeError, match=r"\(3, 4\).*\(5, 2\)"):
            T.matmul(np.zeros((3, 4)), np.zeros((5, 2)))

    def test_batched_grad(self, f64, rng):
        a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
        ga, gb = grad_of(lambda x, y: T.sum_(T.matmul(x, y)), a, b)
        np.testing.assert_allclose(ga, np.broadcast_to(b.sum(1), (2, 3, 4)))
        np.testing.assert_allclose(gb, np.broadcast_to(a.sum((0, 1))[:, None], (4, 5)))


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(T.softmax(np.zeros(2)).data, [0.5, 0.5])

    def test_closed_form(self):
        np.testing.assert_allclose(T.softmax(np.array([0.0, np.log(3.0)])).data, [0.25, 0.75], atol=1e-7)

    def test_formula_oracle(self, rng):
        x = rng.normal(size=7)
        np.testing.assert_allclose(T.softmax(x).data, np.exp(x) / np.exp(x).sum(), atol=1e-6)

    def test_large_logits_stay_finite(self):
        out = T.softmax(np.array([1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [1.0, 0.0])


class TestRMSNorm:
    def test_constant_vector(self):
        np.testing.assert_allclose(rms_norm(np.array([2.0, 2.0]), np.ones(2), eps=0.0).data, [1.0, 1.0])

    def test_zero_vector(self):
        np.testing.assert_array_equal(rms_norm(np.zeros(2), np.ones(2), eps=1e-6).data, [0.0, 0.0])

    def test_formula_oracle(self, rng):
        x, g = rng.normal(size=16), rng.normal(size=16)
        want = x / np.sqrt(np.mean(x**2) + 1e-6) * g
        np.testing.assert_allclose(rms_norm(x, g).data, want, rtol=1e-6, atol=1e-6)


class TestSwiGLU:
    def test_zero_input(self, rng):
        w1, w3, w2 = rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), rng.normal(size=(6, 4))
        np.testing.assert_array_equal(swiglu_ffn(np.zeros((1, 4)), w1, w3, w2).data, np.zeros((1, 4)))

    def test_zero_gate(self, rng):
        w1, w2 = rng.normal(size=(4, 6)), rng.normal(size=(6, 4))
        out = swiglu_ffn(rng.normal(size=(3, 4)), w1, np.zeros((4, 6)), w2)
        np.testing.assert_array_equal(out.data, np.zeros((3, 4)))

    def test_composed_oracle(self, rng):
        x = rng.normal(size=(3, 4))
        w1, w3, w2 = rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), rng.normal(size=(6, 4))
        h = x @ w1
        want = (h / (1 + np.exp(-h)) * (x @ w3)) @ w2
        np.testing.assert_allclose(swiglu_ffn(x, w1, w3, w2).data, want, rtol=1e-5, atol=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            swiglu_ffn(np.zeros((2, 4)), np.zeros((4, 6)), np.zeros((4, 5)), np.zeros((6, 4)))


class TestBackward:
    def test_square(self):
        (g,) = grad_of(lambda x: T.mul(x, x), 3.0)
        assert g == pytest.approx(6.0)

    def test_softmax_sum_is_constant(self, f64, rng):
        (g,) = grad_of(lambda x: T.sum_(T.softmax(x)), rng.normal(size=5))
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_broadcast_add_reduces_grad(self, f64):
        ga, gb = grad_of(lambda a, b: T.sum_(T.add(a, b)), np.zeros((3, 2)), np.zeros(2))
        np.testing.assert_array_equal(ga, np.ones((3, 2)))
        np.testing.assert_array_equal(gb, [3.0, 3.0])

    def test_getitem_scatter(self, f64):
        (g,) = grad_of(lambda x: T.sum_(x[np.array([0, 0, 2])]), np.zeros(3))
        np.testing.assert_array_equal(g, [2.0, 0.0, 1.0])

    def test_reused_node_accumulates(self, f64):
        # y = x*x + x  -> dy/dx = 2x + 1
        (g,) = grad_of(lambda x: T.add(T.mul(x, x), x), 2.0)
        assert g == pytest.approx(5.0)

    def test_non_scalar_loss_rejected(self):
        p = Parameter("p", np.ones(3))
        with Tape() as tape:
            y = T.mul(p, 2.0)
            with pytest.raises(ValueError, match="scalar"):
                tape.backward(y, [p])

    def test_frozen_parameter_gets_no_grad(self, f64):
        p = Parameter("p", np.ones(2), trainable=False)
        q = Parameter("q", np.ones(2))
        with Tape() as tape:
            tape.backward(T.sum_(T.mul(p, q)), [p, q])
        np.testing.assert_array_equal(q.grad, [1.0, 1.0])
        assert not np.any(p.grad)

    def test_no_grad_records_nothing(self):
        p = Parameter("p", np.ones(2))
        with Tape() as tape:
            with T.no_grad():
                T.mul(p, p)
            assert tape.nodes == []

    def test_quantile_grad_matches_fd(self, f64, rng):
        a = rng.normal(size=6)

        def f(x):
            return T.quantile(x, 0.7, axis=-1)

        (g,) = grad_of(f, a)
        h = 1e-6
        num = np.array([(np.quantile(a + h * e, 0.7) - np.quantile(a - h * e, 0.7)) / (2 * h) for e in np.eye(6)])
        np.testing.assert_allclose(g, num, atol=1e-6)


def test_quantile_matches_numpy(rng):
    a = rng.normal(size=(4, 9))
    for q in (0.0, 0.25, 0.9, 1.0):
        np.testing.assert_allclose(T.quantile(a, q, axis=-1).data, np.quantile(a, q, axis=-1), rtol=1e-6)


def test_dropout_eval_is_identity(rng):
    x = rng.normal(size=(3, 4))
    out = T.dropout(x, 0.5, None, train=False)
    np.testing.assert_array_equal(out.data, x.astype(T.get_dtype()))


def test_precision_context_restores_dtype():
    before = T.get_dtype()
    with T.precision(np.float64):
        assert T.get_dtype() is np.float64
        assert T.tensor([1.0]).dtype == np.float64
    assert T.get_dtype() is before
