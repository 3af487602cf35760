"""Pastprop training loops: LSTM training that also corrects its training data.

Each window's input gradient is turned into a per-time-step delta
``-correction_rate * dLoss/dx``. Variants differ in when deltas reach the
series:

* ``epochwise``: averaged over overlapping windows, applied after every epoch.
* ``instancewise``: applied right after each window, pre-divided by the
  number of windows covering that time step.
* ``selective``: epoch-wise, but with an epoch embargo and a ranking filter
  (threshold, neighbourhood, top-k) on the finalized corrections.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .data import make_windows, window_coverage
from .lstm import LstmDims, LstmWeights, backward_window, forward_window, sgd_step


class Variant(str, enum.Enum):
    STANDARD = "standard"
    EPOCHWISE = "epochwise"
    INSTANCEWISE = "instancewise"
    SELECTIVE = "selective"


@dataclass(frozen=True)
class PastpropConfig:
    variant: Variant = Variant.STANDARD
    correction_rate: float = 1.0
    correction_threshold: float = 0.0
    neighborhood_size: int = 0
    epoch_embargo: int = 0
    top_k: int | None = None  # None keeps every position passing the threshold
    top_k_fraction: float | None = 0.1  # used when top_k is None
    epochs: int = 50
    learning_rate: float = 0.001
    batch_size: int = 1
    clamp: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.correction_rate < 0 or self.correction_threshold < 0:
            raise ValueError("correction_rate and correction_threshold must be >= 0")
        if self.neighborhood_size < 0 or self.epoch_embargo < 0:
            raise ValueError("neighborhood_size and epoch_embargo must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError("top_k must be >= 0")

    def resolved_top_k(self, train_length: int) -> int | None:
        if self.top_k is not None:
            return self.top_k
        if self.top_k_fraction is None:
            return None
        return max(1, int(self.top_k_fraction * train_length))


@dataclass
class CorrectionBuffer:
    sums: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, length: int) -> "CorrectionBuffer":
        return cls(np.zeros(length), np.zeros(length, dtype=np.int64))

    def reset(self) -> None:
        self.sums[:] = 0.0
        self.counts[:] = 0


@dataclass
class TrainingOutcome:
    weights: LstmWeights
    corrected_series: np.ndarray
    loss_trace: list[float]
    correction_magnitude: list[float]
    snapshots: list[np.ndarray] = field(default_factory=list)
    epoch_weights: list[LstmWeights] = field(default_factory=list)


def accumulate_deltas(buffer: CorrectionBuffer, window_start: int, input_grads,
                      correction_rate: float) -> CorrectionBuffer:
    g = np.asarray(input_grads, dtype=np.float64).reshape(len(input_grads), -1)[:, 0]
    stop = window_start + g.size
    if window_start < 0 or stop > buffer.sums.size:
        raise IndexError(
            f"window [{window_start}, {stop}) outside series of length {buffer.sums.size}")
    buffer.sums[window_start:stop] += -correction_rate * g
    buffer.counts[window_start:stop] += 1
    return buffer


def finalize_corrections(buffer: CorrectionBuffer) -> np.ndarray:
    out = np.zeros_like(buffer.sums)
    hit = buffer.counts > 0
    out[hit] = buffer.sums[hit] / buffer.counts[hit]
    return out


def selection_scores(corrections, neighborhood_size: int) -> np.ndarray:
    """|delta| plus the mean |delta| over the clipped window [t-s, t+s]."""
    mag = np.abs(np.asarray(corrections, dtype=np.float64))
    s = int(neighborhood_size)
    csum = np.concatenate(([0.0], np.cumsum(mag)))
    idx = np.arange(mag.size)
    lo = np.maximum(idx - s, 0)
    hi = np.minimum(idx + s + 1, mag.size)
    return mag + (csum[hi] - csum[lo]) / (hi - lo)


def select_corrections(corrections, threshold: float, neighborhood_size: int,
                       top_k: int | None) -> np.ndarray:
    c = np.asarray(corrections, dtype=np.float64)
    if neighborhood_size < 0:
        raise ValueError("neighborhood_size must be >= 0")
    score = selection_scores(c, neighborhood_size)
    keep = np.flatnonzero(score > threshold)
    if top_k is not None and keep.size > top_k:
        # stable sort: ties resolve to the earlier index
        order = np.argsort(-score[keep], kind="stable")
        keep = keep[order[:top_k]]
    out = np.zeros_like(c)
    out[keep] = c[keep]
    return out


def _check_series(series, dims: LstmDims) -> np.ndarray:
    data = np.array(series, dtype=np.float64)
    if data.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if data.size <= dims.sample_size + dims.label_size:
        raise ValueError(
            f"series of length {data.size} too short for sample_size "
            f"{dims.sample_size} + label_size {dims.label_size}")
    if not np.all(np.isfinite(data)):
        raise ValueError("series contains non-finite values")
    return data


def _apply(data: np.ndarray, corrections: np.ndarray, clamp: bool) -> float:
    data += corrections
    if clamp:
        np.clip(data, 0.0, 1.0, out=data)
    return float(np.sum(np.abs(corrections)))


def train(series, config: PastpropConfig, initial_weights: LstmWeights,
          dims: LstmDims, keep_snapshots: bool = False) -> TrainingOutcome:
    """Train one LSTM on ``series`` under ``config.variant``.

    The input is never modified; the corrected copy is returned in the outcome.
    """
    initial_weights.check_dims(dims)
    data = _check_series(series, dims)
    variant = config.variant
    rate = config.correction_rate
    windows = make_windows(data, dims.sample_size, dims.label_size)
    n = data.size

    buffer = CorrectionBuffer.empty(n)
    coverage = window_coverage(n, dims.sample_size, dims.label_size)
    inv_cover = np.zeros(n)
    inv_cover[coverage > 0] = 1.0 / coverage[coverage > 0]
    top_k = config.resolved_top_k(n)

    w = initial_weights.copy()
    out = TrainingOutcome(w, data, [], [])
    for epoch in range(1, config.epochs + 1):
        if keep_snapshots:
            out.snapshots.append(data.copy())
        buffer.reset()
        applied = 0.0
        total = 0.0
        pending = None
        in_batch = 0
        for k, start in enumerate(windows.starts):
            cache = forward_window(w, windows.inputs[k], dims)
            res = backward_window(w, cache, windows.labels[k])
            total += res.loss
            if pending is None:
                pending = res.grads
            else:
                pending = LstmWeights(pending.W + res.grads.W, pending.Wy + res.grads.Wy)
            in_batch += 1
            if variant is Variant.INSTANCEWISE:
                sl = slice(start, start + dims.sample_size)
                delta = -rate * res.input_grads[:, 0] * inv_cover[sl]
                data[sl] += delta
                if config.clamp:
                    np.clip(data[sl], 0.0, 1.0, out=data[sl])
                applied += float(np.sum(np.abs(delta)))
            elif variant is not Variant.STANDARD:
                accumulate_deltas(buffer, int(start), res.input_grads, rate)
            if in_batch == config.batch_size or k == len(windows.starts) - 1:
                if in_batch > 1:
                    pending = LstmWeights(pending.W / in_batch, pending.Wy / in_batch)
                w = sgd_step(w, pending, config.learning_rate)
                pending = None
                in_batch = 0

        if variant is Variant.EPOCHWISE:
            applied = _apply(data, finalize_corrections(buffer), config.clamp)
        elif variant is Variant.SELECTIVE and epoch > config.epoch_embargo:
            chosen = select_corrections(finalize_corrections(buffer),
                                        config.correction_threshold,
                                        config.neighborhood_size, top_k)
            applied = _apply(data, chosen, config.clamp)
        out.loss_trace.append(total / len(windows.starts))
        out.correction_magnitude.append(applied)
        if keep_snapshots:
            out.epoch_weights.append(w.copy())
    out.weights = w
    return out


def _train_as(variant: Variant):
    def run(series, config: PastpropConfig, initial_weights: LstmWeights,
            dims: LstmDims, keep_snapshots: bool = False) -> TrainingOutcome:
        return train(series, replace(config, variant=variant), initial_weights,
                     dims, keep_snapshots)
    run.__name__ = f"train_{variant.value}"
    return run


train_standard = _train_as(Variant.STANDARD)
train_epochwise = _train_as(Variant.EPOCHWISE)
train_instancewise = _train_as(Variant.INSTANCEWISE)
train_selective = _train_as(Variant.SELECTIVE)
