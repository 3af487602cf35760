"""Loading, scaling, splitting, windowing and anomaly injection for univariate series."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import SeededRng

ANOMALY_LEVELS = (0, 25, 50)


class DataError(ValueError):
    pass


@dataclass
class TimeSeriesRecord:
    id: str
    values: np.ndarray
    frequency: str | None = None


@dataclass(frozen=True)
class NormalizationParams:
    min: float
    max: float

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.min) / (self.max - self.min)

    def invert(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * (self.max - self.min) + self.min


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    test_path: str | None = None  # M4 style: test values come from a separate file

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class AnomalySpec:
    start: int
    length: int
    level: int
    chunk_count: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.level not in ANOMALY_LEVELS:
            raise DataError(f"anomaly level must be one of {ANOMALY_LEVELS}, got {self.level}")
        if self.length < 1 or self.chunk_count < 1:
            raise DataError("anomaly length and chunk_count must be >= 1")


@dataclass
class WindowedDataset:
    starts: np.ndarray
    inputs: np.ndarray  # read-only views over the source array
    labels: np.ndarray

    def __len__(self):
        return self.starts.size


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse(cell: str, row: int, col: int, path) -> float:
    cell = cell.strip()
    if cell == "":
        raise DataError(f"{path}: missing value at row {row}, column {col}")
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: non-numeric value {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}: non-finite value at row {row}, column {col}")
    return v


def load_csv(path, layout: str = "row", value_column: int = -1) -> list[TimeSeriesRecord]:
    """Read series from a CSV file.

    ``row`` layout: one series per line, first cell is the id, the rest are
    values (trailing empty cells are dropped so ragged M4 files load).
    ``column`` layout: one value per line taken from ``value_column``; a
    non-numeric first line is treated as a header (NAB files).
    Row and column numbers in errors are 1-based.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    if layout == "row":
        records = []
        first = rows[0]
        skip_header = len(first) > 1 and not any(_is_number(c) for c in first[1:] if c.strip())
        for r_i, row in enumerate(rows, start=1):
            if r_i == 1 and skip_header:
                continue
            cells = list(row)
            while cells and cells[-1].strip() == "":
                cells.pop()
            if len(cells) < 2:
                raise DataError(f"{path}: row {r_i} has no values")
            vals = [_parse(c, r_i, c_i, path) for c_i, c in enumerate(cells[1:], start=2)]
            records.append(TimeSeriesRecord(cells[0].strip(), np.array(vals)))
        if not records:
            raise DataError(f"{path}: no series found")
        return records

    if layout == "column":
        vals = []
        for r_i, row in enumerate(rows, start=1):
            try:
                cell = row[value_column]
            except IndexError:
                raise DataError(f"{path}: row {r_i} has no column {value_column}") from None
            if r_i == 1 and not _is_number(cell):
                continue
            col = value_column + 1 if value_column >= 0 else len(row) + value_column + 1
            vals.append(_parse(cell, r_i, col, path))
        if not vals:
            raise DataError(f"{path}: no values found")
        return [TimeSeriesRecord(path.stem, np.array(vals))]

    raise ValueError(f"unknown layout {layout!r} (expected 'row' or 'column')")


def write_csv(path, records, layout: str = "row") -> None:
    """Write series with full float precision so reloads are bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if layout == "row":
            for rec in records:
                w.writerow([rec.id, *(repr(float(v)) for v in rec.values)])
        elif layout == "column":
            if len(records) != 1:
                raise ValueError("column layout holds exactly one series")
            w.writerow(["value"])
            for v in records[0].values:
                w.writerow([repr(float(v))])
        else:
            raise ValueError(f"unknown layout {layout!r}")


def write_mask(path, mask) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("anomaly\n")
        fh.writelines(f"{int(m)}\n" for m in np.asarray(mask, dtype=bool))


def fit_normalization(series) -> NormalizationParams:
    x = np.asarray(series, dtype=np.float64)
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DataError("cannot normalize a constant series (max == min)")
    return NormalizationParams(lo, hi)


def normalize(series) -> tuple[np.ndarray, NormalizationParams]:
    params = fit_normalization(series)
    return params.apply(series), params


def denormalize(series, params: NormalizationParams) -> np.ndarray:
    return params.invert(series)


def split(series, spec: SplitSpec = SplitSpec(), min_train: int = 1,
          min_test: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous train/test split; train length is floor(fraction * n)."""
    x = np.asarray(series, dtype=np.float64)
    n_train = int(math.floor(spec.train_fraction * x.size))
    train, test = x[:n_train], x[n_train:]
    if train.size < min_train or test.size < min_test:
        raise DataError(
            f"split of length {x.size} gives train {train.size} / test {test.size}; "
            f"need at least {min_train} / {min_test}")
    return train, test


def make_windows(series: np.ndarray, sample_size: int, label_size: int,
                 stride: int = 1) -> WindowedDataset:
    """Sliding windows as views, so in-place edits of ``series`` are visible."""
    n = series.shape[0]
    if n < sample_size + label_size:
        raise DataError(
            f"series of length {n} shorter than sample_size + label_size "
            f"= {sample_size + label_size}")
    span = np.lib.stride_tricks.sliding_window_view(series, sample_size + label_size)
    span = span[::stride]  # basic slicing keeps these as views
    starts = np.arange(0, n - sample_size - label_size + 1, stride)
    return WindowedDataset(starts, span[:, :sample_size], span[:, sample_size:])


def window_coverage(length: int, sample_size: int, label_size: int,
                    stride: int = 1) -> np.ndarray:
    """How many windows use each index as an input position."""
    counts = np.zeros(length, dtype=np.int64)
    for s in range(0, length - sample_size - label_size + 1, stride):
        counts[s:s + sample_size] += 1
    return counts


def anomaly_chunks(spec: AnomalySpec) -> list[tuple[int, int]]:
    if spec.chunk_count > spec.length:
        raise DataError(f"{spec.chunk_count} chunks do not fit in a zone of length {spec.length}")
    size = spec.length // spec.chunk_count
    bounds = [spec.start + i * size for i in range(spec.chunk_count)] + [spec.start + spec.length]
    return list(zip(bounds[:-1], bounds[1:]))


def inject_anomaly(series, spec: AnomalySpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (anomalous copy, boolean zone mask).

    Level 0 zeroes the zone. Levels 25/50 shift each chunk up or down (sign
    drawn per chunk) by max(0.1, level% of the value).
    """
    x = np.array(series, dtype=np.float64)
    if spec.start < 0 or spec.start + spec.length > x.size:
        raise DataError(
            f"anomaly zone [{spec.start}, {spec.start + spec.length}) outside "
            f"series of length {x.size}")
    mask = np.zeros(x.size, dtype=bool)
    mask[spec.start:spec.start + spec.length] = True
    if spec.level == 0:
        x[mask] = 0.0
        return x, mask
    chunks = anomaly_chunks(spec)
    signs = SeededRng(spec.seed).signs(len(chunks))
    frac = spec.level / 100.0
    for (lo, hi), sign in zip(chunks, signs):
        v = x[lo:hi]
        x[lo:hi] = v + sign * np.maximum(0.1, frac * v)
    return x, mask


def seasonal_series(length: int, period: int = 24, seed: int = 0, noise: float = 0.05,
                    trend: float = 0.0, harmonics: int = 2) -> np.ndarray:
    """Synthetic seasonal signal with a small deterministic noise term."""
    rng = SeededRng(seed)
    t = np.arange(length, dtype=np.float64)
    phase = 2.0 * np.pi * rng.uniform(harmonics)
    y = 10.0 + trend * t
    for k in range(1, harmonics + 1):
        y = y + (3.0 / k) * np.sin(2.0 * np.pi * k * t / period + phase[k - 1])
    # uniform(-1, 1) has std 1/sqrt(3)
    y = y + noise * np.sqrt(3.0) * (2.0 * rng.uniform(length) - 1.0)
    return y
