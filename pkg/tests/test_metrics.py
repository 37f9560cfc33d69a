import numpy as np
import pytest

from sempo.metrics import MetricError, all_metrics, mae, mase, mse, nrmse, smape


def test_mse_mae_examples():
    assert mse([1, 2, 3], [1, 2, 3]) == 0.0
    assert mse([1, 1], [2, 0]) == 1.0
    assert mae([1, 1], [2, 0]) == 1.0


def test_mse_mae_formula(rng):
    y, p = rng.normal(size=50), rng.normal(size=50)
    assert mse(y, p) == pytest.approx(sum((a - b) ** 2 for a, b in zip(y, p)) / 50)
    assert mae(y, p) == pytest.approx(sum(abs(a - b) for a, b in zip(y, p)) / 50)


def test_length_mismatch():
    for fn in (mse, mae, smape, nrmse):
        with pytest.raises(MetricError, match="length"):
            fn([1, 2], [1])


def test_smape_examples():
    assert smape([1, 2], [1, 2]) == 0.0
    assert smape([1], [3]) == pytest.approx(1.0)
    assert smape([0], [0]) == 0.0
    assert smape([0, 1], [0, 3]) == pytest.approx(0.5)


def test_smape_bounded(rng):
    y, p = rng.normal(size=1000), rng.normal(size=1000)
    assert 0.0 <= smape(y, p) <= 2.0
    assert smape([1.0], [-1.0]) == 2.0


def test_nrmse_examples():
    assert nrmse([1, 2], [1, 2]) == 0.0
    assert nrmse([2, 2], [2, 4]) == pytest.approx(np.sqrt(2) / 2)
    with pytest.raises(MetricError):
        nrmse([0, 0], [1, 1])


def test_nrmse_scale_invariant(rng):
    y, p = rng.normal(size=30), rng.normal(size=30)
    assert nrmse(3 * y, 3 * p) == pytest.approx(nrmse(y, p), rel=1e-12)


def test_mase_seasonal_naive_case():
    # period-4 pattern with a trend: seasonal-naive in-sample errors are all 1
    insample = np.array([0, 5, 2, 7, 1, 6, 3, 8, 2, 7, 4, 9], dtype=float)
    y = insample[-4:] + 1
    naive = insample[-4:]
    assert mase(y, naive, insample, season=4) == pytest.approx(1.0)
    assert mase(y, y, insample, season=4) == 0.0


def test_mase_errors():
    with pytest.raises(MetricError, match="zero"):
        mase([1, 2], [1, 2], np.ones(10))
    with pytest.raises(MetricError, match="exceed"):
        mase([1], [1], [1, 2], season=2)


def test_all_metrics_marks_undefined():
    m = all_metrics([0, 0], [0, 1], np.ones(5))
    assert m["nrmse"] is None and m["mase"] is None
    assert m["mse"] == 0.5
