"""Forecast accuracy, correlation and anomaly reconstruction metrics."""
from __future__ import annotations

import numpy as np


def _pair(a, b, name: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"{name}: length mismatch ({a.size} vs {b.size})")
    if a.size == 0:
        raise ValueError(f"{name}: empty input")
    return a, b


def mse(predictions, targets) -> float:
    p, t = _pair(predictions, targets, "mse")
    return float(np.mean((p - t) ** 2))


def nmse(predictions, targets) -> float:
    """MSE divided by the mean target value (not scale-free)."""
    p, t = _pair(predictions, targets, "nmse")
    m = float(np.mean(t))
    if m == 0.0:
        raise ValueError("nmse undefined: targets have zero mean")
    return mse(p, t) / m


def pearson(xs, ys) -> float:
    x, y = _pair(xs, ys, "pearson")
    if x.size < 2:
        raise ValueError("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.sum(dx * dx)), np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("pearson undefined: zero variance")
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


def distance(a, b, metric: str = "l2") -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if metric == "l2":
        return float(np.sqrt(np.sum(d * d)))
    if metric == "l1":
        return float(np.sum(np.abs(d)))
    raise ValueError(f"unknown distance {metric!r}")


def reconstruction_ability(original, anomalous, corrected, zone,
                           metric: str = "l2") -> float:
    """1 - dist(corrected, original) / dist(anomalous, original) inside the zone.

    Positive means the corrections moved the zone back toward the original;
    negative means they pushed it further away.
    """
    o = np.asarray(original, dtype=np.float64)
    a = np.asarray(anomalous, dtype=np.float64)
    c = np.asarray(corrected, dtype=np.float64)
    zone = np.asarray(zone, dtype=bool)
    if not (o.shape == a.shape == c.shape == zone.shape):
        raise ValueError("reconstruction_ability: length mismatch")
    if not zone.any():
        raise ValueError("reconstruction_ability: empty anomaly zone")
    base = distance(a[zone], o[zone], metric)
    if base == 0.0:
        raise ValueError("reconstruction_ability: anomaly equals original inside the zone")
    return 1.0 - distance(c[zone], o[zone], metric) / base


def outside_loss(original, corrected, zone, metric: str = "l2") -> float:
    o = np.asarray(original, dtype=np.float64)
    c = np.asarray(corrected, dtype=np.float64)
    zone = np.asarray(zone, dtype=bool)
    if not (o.shape == c.shape == zone.shape):
        raise ValueError("outside_loss: length mismatch")
    if zone.all():
        raise ValueError("outside_loss: zone covers the whole series")
    return distance(c[~zone], o[~zone], metric)
