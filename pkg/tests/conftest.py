import numpy as np
import pytest

from pastprop.kernel import SeededRng
from pastprop.lstm import LstmDims, init_weights, loss, predict

SMALL = LstmDims(input_dim=1, hidden_units=8, sample_size=5, label_size=1)


def fd_weight_grads(w, x, y, dims, eps=1e-5):
    """Central finite differences of the window loss for every weight entry."""
    out = []
    for arr in (w.W, w.Wy):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + eps
            up = loss(predict(w, x, dims), y)
            arr[idx] = keep - eps
            down = loss(predict(w, x, dims), y)
            arr[idx] = keep
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def fd_input_grads(w, x, y, dims, eps=1e-5):
    x = np.array(x, dtype=np.float64).reshape(dims.sample_size, dims.input_dim)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (loss(predict(w, xp, dims), y) - loss(predict(w, xm, dims), y)) / (2 * eps)
    return g


def random_case(seed, dims=SMALL, scale=0.5):
    rng = SeededRng(seed)
    w = init_weights(dims, rng, -scale, scale)
    x = rng.uniform(dims.sample_size * dims.input_dim).reshape(dims.sample_size, dims.input_dim)
    y = rng.uniform(dims.label_size)
    return w, x, y


def rel_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    """Relative error |a - n| / max(|a|, |n|) under rtol, with an absolute floor."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    return bool(np.all((diff <= atol) | (diff <= rtol * scale)))


@pytest.fixture
def small_dims():
    return SMALL


@pytest.fixture
def toy_series():
    t = np.arange(40, dtype=np.float64)
    return 0.5 + 0.4 * np.sin(2 * np.pi * t / 8)


ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
