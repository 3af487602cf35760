"""Dense numeric helpers and a portable seeded generator.

Arrays are plain float64 numpy arrays. The generator is SplitMix64 run in
counter mode, so draw sequences depend only on the seed and never on the
numpy or platform default RNG.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = (1 << 64) - 1


class NumericError(ValueError):
    pass


def _check_finite(out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{what} produced non-finite values")
    return out


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise NumericError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return _check_finite(a @ b, "matmul")


def sigmoid(v) -> np.ndarray:
    # tanh form never overflows and avoids branching on sign
    v = np.asarray(v, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def tanh(v) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=np.float64))


def sigmoid_grad_from_output(s: np.ndarray) -> np.ndarray:
    """Derivative of sigmoid expressed through its output s."""
    return s * (1.0 - s)


def tanh_grad_from_output(t: np.ndarray) -> np.ndarray:
    return 1.0 - t * t


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SeededRng:
    """SplitMix64 stream: draw i is mix(seed + (i + 1) * golden_gamma).

    Identical seeds give identical sequences on every platform. ``fork``
    derives an independent child stream from the next parent draw.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(np.uint64(self.seed) + idx * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) built from the top 53 bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def signs(self, n: int) -> np.ndarray:
        return np.where(self.uniform(n) < 0.5, -1.0, 1.0)

    def fork(self) -> "SeededRng":
        return SeededRng(int(self.next_u64(1)[0]))

    def clone(self) -> "SeededRng":
        twin = SeededRng(self.seed)
        twin.counter = self.counter
        return twin


def init_uniform(rng: SeededRng, rows: int, cols: int,
                 low: float = -0.1, high: float = 0.1) -> np.ndarray:
    if not low < high:
        raise NumericError(f"init range needs low < high, got [{low}, {high})")
    u = rng.uniform(rows * cols).reshape(rows, cols)
    out = low + (high - low) * u
    # rounding can land exactly on `high` for tiny ranges
    return np.where(out >= high, np.nextafter(high, low), out)
