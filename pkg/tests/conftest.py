import numpy as np
import pytest

from proxyhash.codespace import ProxyCodebook


def central_diff(f, x, step=1e-3):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        hi = f(x)
        x[i] = orig - step
        lo = f(x)
        x[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)), np.max(np.abs(b))))


def random_instance(rng, k=None, c=None, n=1):
    """Random codebook, continuous codes in (-1, 1) and multi-hot labels."""
    k = k or int(rng.choice([8, 32, 64]))
    c = c or int(rng.choice([2, 8, 16]))
    codebook = ProxyCodebook(rng.choice([-1, 1], size=(c, k)))
    codes = rng.uniform(-1, 1, size=(n, k))
    labels = rng.random((n, c)) < rng.uniform(0.05, 0.6)
    labels[np.arange(n), rng.integers(0, c, size=n)] = True
    return codebook, codes, labels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one (name, passed, detail) record per acceptance criterion, echoed after the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
