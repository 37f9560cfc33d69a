import numpy as np
import pytest

from sempo import config, tensor as T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    return config.tiny()


@pytest.fixture
def f64():
    with T.precision(np.float64):
        yield


def naive_dft(x):
    """Scalar-loop one-sided DFT, independent of the package."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    re, im = [], []
    for k in range(n // 2 + 1):
        re.append(sum(x[j] * np.cos(2 * np.pi * k * j / n) for j in range(n)))
        im.append(-sum(x[j] * np.sin(2 * np.pi * k * j / n) for j in range(n)))
    return np.array(re), np.array(im)


def naive_idft(re, im, n):
    """Scalar-loop inverse of the one-sided DFT (Hermitian extension)."""
    out = np.zeros(n)
    f = n // 2 + 1
    for j in range(n):
        acc = re[0] + re[f - 1] * np.cos(np.pi * j)
        for k in range(1, f - 1):
            ang = 2 * np.pi * k * j / n
            acc += 2 * (re[k] * np.cos(ang) - im[k] * np.sin(ang))
        out[j] = acc / n
    return out


_ACCEPTANCE: list[tuple[int, str]] = []


@pytest.fixture
def criterion(capsys):
    """Print and collect one PASS/FAIL line for an acceptance criterion."""

    def record(num: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2}: {title} | {detail}"
        _ACCEPTANCE.append((num, line))
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
