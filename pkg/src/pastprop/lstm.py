"""Single-layer LSTM with a linear output head, trained window by window.

All four gates read the same hidden input ``hin = [x_t, h_{t-1}, 1]``, so
each gate is one matrix over that vector. The gate matrices are kept in a
single stacked array (order: input, forget, output, candidate) and exposed
individually as views.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    NumericError,
    SeededRng,
    init_uniform,
    sigmoid,
    sigmoid_grad_from_output,
    tanh_grad_from_output,
)

GATES = ("i", "f", "o", "g")


@dataclass(frozen=True)
class LstmDims:
    input_dim: int = 1
    hidden_units: int = 200
    sample_size: int = 5
    label_size: int = 1

    def __post_init__(self):
        for name in ("input_dim", "hidden_units", "sample_size", "label_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def hin_size(self) -> int:
        return self.input_dim + self.hidden_units + 1


@dataclass
class LstmWeights:
    W: np.ndarray   # (4 * hidden, hin_size), rows grouped i, f, o, g
    Wy: np.ndarray  # (label_size, hidden)

    def _gate(self, k: int) -> np.ndarray:
        h = self.W.shape[0] // 4
        return self.W[k * h:(k + 1) * h]

    @property
    def Wi(self):
        return self._gate(0)

    @property
    def Wf(self):
        return self._gate(1)

    @property
    def Wo(self):
        return self._gate(2)

    @property
    def Wg(self):
        return self._gate(3)

    @property
    def hidden_units(self) -> int:
        return self.W.shape[0] // 4

    def copy(self) -> "LstmWeights":
        return LstmWeights(self.W.copy(), self.Wy.copy())

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in (self.W, self.Wy):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def equals(self, other: "LstmWeights") -> bool:
        return np.array_equal(self.W, other.W) and np.array_equal(self.Wy, other.Wy)

    def check_dims(self, dims: LstmDims) -> None:
        want_w = (4 * dims.hidden_units, dims.hin_size)
        want_y = (dims.label_size, dims.hidden_units)
        if self.W.shape != want_w or self.Wy.shape != want_y:
            raise NumericError(
                f"weights {self.W.shape}/{self.Wy.shape} do not match dims "
                f"{want_w}/{want_y}")


@dataclass
class WindowCache:
    hin: np.ndarray   # (T, hin_size)
    gates: np.ndarray  # (T, 4H) post-activation i, f, o, g
    c: np.ndarray     # (T + 1, H); row 0 is the zero initial state
    h: np.ndarray     # (T + 1, H)
    z: np.ndarray     # (label_size,)

    def gate(self, name: str) -> np.ndarray:
        hid = self.c.shape[1]
        k = GATES.index(name)
        return self.gates[:, k * hid:(k + 1) * hid]


@dataclass
class BackwardResult:
    grads: LstmWeights
    input_grads: np.ndarray  # (T, input_dim): dLoss/dhin_t restricted to x_t
    loss: float = field(default=0.0)


def init_weights(dims: LstmDims, rng: SeededRng,
                 low: float = -0.1, high: float = 0.1) -> LstmWeights:
    W = init_uniform(rng, 4 * dims.hidden_units, dims.hin_size, low, high)
    Wy = init_uniform(rng, dims.label_size, dims.hidden_units, low, high)
    return LstmWeights(W, Wy)


def _as_window(window, dims: LstmDims) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape != (dims.sample_size, dims.input_dim):
        raise NumericError(
            f"window shape {x.shape} != ({dims.sample_size}, {dims.input_dim})")
    return x


def forward_window(w: LstmWeights, window, dims: LstmDims) -> WindowCache:
    w.check_dims(dims)
    x = _as_window(window, dims)
    T, H, D = dims.sample_size, dims.hidden_units, dims.input_dim
    hin = np.empty((T, dims.hin_size))
    gates = np.empty((T, 4 * H))
    c = np.zeros((T + 1, H))
    h = np.zeros((T + 1, H))
    for t in range(T):
        hin[t, :D] = x[t]
        hin[t, D:D + H] = h[t]
        hin[t, -1] = 1.0
        a = w.W @ hin[t]
        gates[t, :3 * H] = sigmoid(a[:3 * H])
        gates[t, 3 * H:] = np.tanh(a[3 * H:])
        i, f, o, g = (gates[t, k * H:(k + 1) * H] for k in range(4))
        c[t + 1] = i * g + f * c[t]
        h[t + 1] = o * np.tanh(c[t + 1])
    z = w.Wy @ h[T]
    if not np.all(np.isfinite(z)):
        raise NumericError("forward pass produced non-finite output")
    return WindowCache(hin, gates, c, h, z)


def loss(z, y) -> float:
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if z.shape != y.shape:
        raise ValueError(f"prediction length {z.size} != label length {y.size}")
    return float(np.mean((z - y) ** 2))


def backward_window(w: LstmWeights, cache: WindowCache, y) -> BackwardResult:
    """Gradients of the window MSE w.r.t. every weight and every input sample.

    The input gradient at block t is W^T applied to the stacked gate
    pre-activation gradients, sliced to the x_t entries of the hidden input.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    T = cache.hin.shape[0]
    H = cache.c.shape[1]
    if (cache.hin.shape[1] != w.W.shape[1] or w.W.shape[0] != 4 * H
            or w.Wy.shape != (y.size, H) or cache.z.shape != y.shape):
        raise NumericError("cache does not match weights/label shapes (stale cache?)")
    D = cache.hin.shape[1] - H - 1

    dz = 2.0 * (cache.z - y) / y.size
    dWy = np.outer(dz, cache.h[T])
    dh = w.Wy.T @ dz
    dc_next = np.zeros(H)
    dA = np.empty((T, 4 * H))
    input_grads = np.empty((T, D))
    for t in range(T - 1, -1, -1):
        g_all = cache.gates[t]
        i, f, o, g = (g_all[k * H:(k + 1) * H] for k in range(4))
        tc = np.tanh(cache.c[t + 1])
        do = dh * tc
        dc = dh * o * tanh_grad_from_output(tc) + dc_next
        da = dA[t]
        da[:H] = dc * g * sigmoid_grad_from_output(i)
        da[H:2 * H] = dc * cache.c[t] * sigmoid_grad_from_output(f)
        da[2 * H:3 * H] = do * sigmoid_grad_from_output(o)
        da[3 * H:] = dc * i * tanh_grad_from_output(g)
        dc_next = dc * f
        dhin = w.W.T @ da
        input_grads[t] = dhin[:D]
        dh = dhin[D:D + H]
    dW = dA.T @ cache.hin
    return BackwardResult(LstmWeights(dW, dWy), input_grads, loss(cache.z, y))


def sgd_step(w: LstmWeights, grads: LstmWeights, learning_rate: float) -> LstmWeights:
    if grads.W.shape != w.W.shape or grads.Wy.shape != w.Wy.shape:
        raise NumericError(
            f"gradient shapes {grads.W.shape}/{grads.Wy.shape} do not match "
            f"weights {w.W.shape}/{w.Wy.shape}")
    return LstmWeights(w.W - learning_rate * grads.W, w.Wy - learning_rate * grads.Wy)


def predict(w: LstmWeights, window, dims: LstmDims) -> np.ndarray:
    return forward_window(w, window, dims).z
