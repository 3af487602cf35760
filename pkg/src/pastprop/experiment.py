"""Experiment orchestration: shared-seed comparisons of Standard LSTM and Pastprop.

Every (series, seed) cell draws one set of initial weights and hands the same
copy to each method. Outputs are deterministic in (config, seeds); wall
times go to a separate ``timings.json`` so reports stay byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import metrics
from .data import (
    AnomalySpec,
    DataError,
    NormalizationParams,
    SplitSpec,
    TimeSeriesRecord,
    fit_normalization,
    inject_anomaly,
    load_csv,
    split,
    write_csv,
    write_mask,
)
from .engine import PastpropConfig, TrainingOutcome, Variant, train
from .kernel import SeededRng
from .lstm import LstmDims, LstmWeights, init_weights, predict

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "series_id", "method", "variant", "seed", "series_length", "train_length",
    "test_length", "mse", "nmse", "reconstruction_ability", "outside_loss",
    "final_train_loss", "total_correction", "init_checksum", "weights_checksum", "error",
]
GAIN_COLUMNS = ["series_id", "seed", "method", "variant", "lstm_mse", "variant_mse", "gain"]
TRANSFER_COLUMNS = ["series_id", "producer", "seed", "baseline_mse", "transfer_mse", "gain", "error"]


class ConfigError(ValueError):
    pass


@dataclass
class InputSpec:
    path: str
    layout: str = "row"
    value_column: int = -1
    test_path: str | None = None


@dataclass
class AnomalyPlan:
    """Anomaly placement. ``start`` below 1.0 is read as a fraction of the training length."""
    start: float
    length: int
    level: int
    chunk_count: int = 4
    seed: int = 0

    def resolve(self, train_length: int) -> AnomalySpec:
        start = self.start
        if isinstance(start, float) and 0.0 <= start < 1.0:
            start = int(start * train_length)
        return AnomalySpec(int(start), self.length, self.level, self.chunk_count, self.seed)


@dataclass
class MethodSpec:
    name: str
    config: PastpropConfig


@dataclass
class ExperimentConfig:
    inputs: list[InputSpec]
    methods: list[MethodSpec]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    dims: LstmDims = field(default_factory=LstmDims)
    train_fraction: float = 0.7
    init_low: float = -0.1
    init_high: float = 0.1
    anomaly: AnomalyPlan | None = None
    forecast: str = "rolling"
    distance: str = "l2"
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate method names in {names}")
        if self.forecast not in ("rolling", "recursive"):
            raise ConfigError("forecast must be 'rolling' or 'recursive'")
        if self.distance not in ("l1", "l2"):
            raise ConfigError("distance must be 'l1' or 'l2'")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            inputs = [InputSpec(**i) if isinstance(i, dict) else InputSpec(str(i))
                      for i in raw.pop("inputs")]
        except KeyError:
            raise ConfigError("config needs an 'inputs' list") from None
        training = raw.pop("training", {}) or {}
        lstm = raw.pop("lstm", {}) or {}
        dims = LstmDims(**{k: lstm[k] for k in ("input_dim", "hidden_units", "sample_size",
                                                  "label_size") if k in lstm})
        init_low = lstm.get("init_low", -0.1)
        init_high = lstm.get("init_high", 0.1)
        methods = []
        for m in raw.pop("methods", None) or [{"name": "standard", "variant": "standard"}]:
            m = dict(m)
            name = m.pop("name", m.get("variant", "standard"))
            try:
                methods.append(MethodSpec(name, PastpropConfig(**{**training, **m})))
            except TypeError as exc:
                raise ConfigError(f"method {name!r}: {exc}") from None
        anomaly = raw.pop("anomaly", None)
        split_cfg = raw.pop("split", {}) or {}
        try:
            return cls(inputs=inputs, methods=methods, dims=dims, init_low=init_low,
                       init_high=init_high,
                       anomaly=AnomalyPlan(**anomaly) if anomaly else None,
                       train_fraction=split_cfg.get("train_fraction", 0.7), **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        def method(m: MethodSpec) -> dict:
            d = asdict(m.config)
            d["variant"] = m.config.variant.value
            return {"name": m.name, **d}
        return {
            "inputs": [asdict(i) for i in self.inputs],
            "methods": [method(m) for m in self.methods],
            "seeds": list(self.seeds),
            "lstm": {**asdict(self.dims), "init_low": self.init_low, "init_high": self.init_high},
            "split": {"train_fraction": self.train_fraction},
            "anomaly": asdict(self.anomaly) if self.anomaly else None,
            "forecast": self.forecast,
            "distance": self.distance,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }


@dataclass
class SeriesCase:
    id: str
    layout: str
    series_length: int
    params: NormalizationParams
    clean_train: np.ndarray  # normalized, before anomaly injection
    train: np.ndarray  # what the models see
    test: np.ndarray
    mask: np.ndarray | None = None


@dataclass
class ExperimentReport:
    rows: list[dict] = field(default_factory=list)
    gains: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(not r.get("error") for r in self.rows)


def initial_weights(config: ExperimentConfig, seed: int) -> LstmWeights:
    return init_weights(config.dims, SeededRng(seed), config.init_low, config.init_high)


def prepare_series(record: TimeSeriesRecord, config: ExperimentConfig, layout: str,
                   test_values: np.ndarray | None = None) -> SeriesCase:
    """Split, normalize with training statistics, and inject the configured anomaly."""
    dims = config.dims
    need_train = dims.sample_size + dims.label_size + 1
    if test_values is None:
        raw_train, raw_test = split(record.values, SplitSpec(config.train_fraction),
                                    min_train=need_train, min_test=dims.label_size)
        length = record.values.size
    else:
        raw_train, raw_test = record.values, np.asarray(test_values, dtype=np.float64)
        if raw_train.size < need_train or raw_test.size < dims.label_size:
            raise DataError(f"series {record.id}: train/test too short")
        length = raw_train.size + raw_test.size
    params = fit_normalization(raw_train)
    clean = params.apply(raw_train)
    case = SeriesCase(record.id, layout, length, params, clean, clean.copy(), params.apply(raw_test))
    if config.anomaly is not None:
        case.train, case.mask = inject_anomaly(clean, config.anomaly.resolve(clean.size))
    return case


def load_cases(config: ExperimentConfig) -> list[SeriesCase | tuple[str, str]]:
    """Prepared cases, or ``(series_id, error message)`` for series that failed."""
    cases = []
    for spec in config.inputs:
        records = load_csv(spec.path, spec.layout, spec.value_column)
        tests = {}
        if spec.test_path:
            tests = {r.id: r.values for r in load_csv(spec.test_path, spec.layout, spec.value_column)}
        for rec in records:
            try:
                if spec.test_path and rec.id not in tests:
                    raise DataError(f"no test series for id {rec.id!r} in {spec.test_path}")
                cases.append(prepare_series(rec, config, spec.layout, tests.get(rec.id)))
            except (DataError, ValueError) as exc:
                log.warning("series %s skipped: %s", rec.id, exc)
                cases.append((rec.id, str(exc)))
    return cases


def forecast(weights: LstmWeights, history: np.ndarray, test: np.ndarray, dims: LstmDims,
             mode: str = "rolling") -> np.ndarray:
    """Predict every test value.

    ``rolling`` slides the input window over the true test values;
    ``recursive`` feeds predictions back in place of unseen values.
    """
    S, L = dims.sample_size, dims.label_size
    preds = np.empty(test.size)
    if mode == "rolling":
        full = np.concatenate([history[-S:], test])
        for j in range(0, test.size, L):
            z = predict(weights, full[j:j + S], dims)
            m = min(L, test.size - j)
            preds[j:j + m] = z[:m]
        return preds
    if mode == "recursive":
        window = list(history[-S:])
        j = 0
        while j < test.size:
            z = predict(weights, np.array(window[-S:]), dims)
            m = min(L, test.size - j)
            preds[j:j + m] = z[:m]
            window.extend(z)
            j += m
        return preds
    raise ValueError(f"unknown forecast mode {mode!r}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell_row(case: SeriesCase, method: MethodSpec, seed: int, init_sum: str,
              outcome: TrainingOutcome, config: ExperimentConfig) -> dict:
    preds = forecast(outcome.weights, case.train, case.test, config.dims, config.forecast)
    row = {
        "series_id": case.id, "method": method.name, "variant": method.config.variant.value,
        "seed": seed, "series_length": case.series_length, "train_length": case.train.size,
        "test_length": case.test.size, "mse": metrics.mse(preds, case.test), "nmse": None,
        "reconstruction_ability": None, "outside_loss": None,
        "final_train_loss": outcome.loss_trace[-1],
        "total_correction": float(np.sum(np.abs(outcome.corrected_series - case.train))),
        "init_checksum": init_sum, "weights_checksum": outcome.weights.checksum(), "error": "",
    }
    try:
        row["nmse"] = metrics.nmse(preds, case.test)
    except ValueError:
        pass
    if case.mask is not None:
        try:
            row["reconstruction_ability"] = metrics.reconstruction_ability(
                case.clean_train, case.train, outcome.corrected_series, case.mask, config.distance)
        except ValueError:
            pass
        row["outside_loss"] = metrics.outside_loss(
            case.clean_train, outcome.corrected_series, case.mask, config.distance)
    row["normalization"] = {"min": case.params.min, "max": case.params.max}
    row["loss_trace"] = list(outcome.loss_trace)
    row["correction_magnitude"] = list(outcome.correction_magnitude)
    return row


def _error_row(series_id: str, method: MethodSpec, seed: int, message: str) -> dict:
    row = {c: None for c in REPORT_COLUMNS}
    row.update(series_id=series_id, method=method.name, variant=method.config.variant.value,
               seed=seed, error=message)
    return row


def run_case(case: SeriesCase, config: ExperimentConfig
             ) -> tuple[list[dict], dict[str, np.ndarray], dict]:
    """All (method, seed) cells of one series. Returns rows, corrected series, timings."""
    rows, corrected, timings = [], {}, {}
    for seed in config.seeds:
        w0 = initial_weights(config, seed)
        init_sum = w0.checksum()
        for m in config.methods:
            t0 = time.perf_counter()
            try:
                outcome = train(case.train, m.config, w0, config.dims)
                rows.append(_cell_row(case, m, seed, init_sum, outcome, config))
                corrected[f"{m.name}.s{seed}"] = outcome.corrected_series
            except (ValueError, FloatingPointError) as exc:
                log.warning("cell %s/%s/%s failed: %s", case.id, m.name, seed, exc)
                rows.append(_error_row(case.id, m, seed, str(exc)))
            timings[f"{case.id}/{m.name}/s{seed}"] = time.perf_counter() - t0
    return rows, corrected, timings


def _run_case_packed(args):
    return run_case(*args)


def gain_table(rows: list[dict]) -> list[dict]:
    """Per (series, seed): standard-LSTM MSE vs each Pastprop method's MSE."""
    base = {(r["series_id"], r["seed"]): r["mse"] for r in rows
            if r["variant"] == Variant.STANDARD.value and not r["error"]}
    out = []
    for r in rows:
        key = (r["series_id"], r["seed"])
        if r["variant"] == Variant.STANDARD.value or r["error"] or key not in base:
            continue
        out.append({"series_id": r["series_id"], "seed": r["seed"], "method": r["method"],
                    "variant": r["variant"], "lstm_mse": base[key], "variant_mse": r["mse"],
                    "gain": base[key] - r["mse"]})
    return out


def _write_table(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def corrected_path(out_dir, series_id: str, method: str, seed: int) -> Path:
    return Path(out_dir) / "corrected" / f"{series_id}.{method}.s{seed}.corrected.csv"


def write_outputs(report: ExperimentReport, config: ExperimentConfig, cases,
                  corrected: dict) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.resolved.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump({"rows": report.rows, "gains": report.gains}, fh, indent=1)
    _write_table(out / "report.csv", REPORT_COLUMNS, report.rows)
    _write_table(out / "gains.csv", GAIN_COLUMNS, report.gains)
    with open(out / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(report.timings, fh, indent=1)
    for case in cases:
        if not isinstance(case, SeriesCase):
            continue
        observed = TimeSeriesRecord(case.id, case.train)
        write_csv(out / "observed" / f"{case.id}.train.csv", [observed], case.layout)
        write_csv(out / "observed" / f"{case.id}.test.csv",
                  [TimeSeriesRecord(case.id, case.test)], case.layout)
        if case.mask is not None:
            write_mask(out / "masks" / f"{case.id}.mask.csv", case.mask)
        for key, series in corrected.get(case.id, {}).items():
            method, seed = key.rsplit(".s", 1)
            write_csv(corrected_path(out, case.id, method, int(seed)),
                      [TimeSeriesRecord(case.id, series)], case.layout)
    return out


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    cases = load_cases(config)
    report = ExperimentReport()
    corrected = {}
    good = [c for c in cases if isinstance(c, SeriesCase)]
    if config.workers > 1 and len(good) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_case_packed, [(c, config) for c in good]))
    else:
        results = [run_case(c, config) for c in good]
    by_id = {c.id: r for c, r in zip(good, results)}
    for case in cases:
        if isinstance(case, SeriesCase):
            rows, corr, timings = by_id[case.id]
            report.rows.extend(rows)
            corrected[case.id] = corr
            report.timings.update(timings)
        else:
            sid, msg = case
            report.rows.extend(_error_row(sid, m, s, msg)
                               for s in config.seeds for m in config.methods)
    report.gains = gain_table(report.rows)
    if write:
        write_outputs(report, config, cases, corrected)
    return report


def run_correction_transfer(config: ExperimentConfig, producer_dir=None,
                            write: bool = True) -> ExperimentReport:
    """Retrain a plain LSTM on each producer's corrected series.

    The baseline is a plain LSTM trained on the observed (possibly anomalous)
    training data; both start from the producer cell's initial weights and
    forecast from the same observed history.
    """
    producer_dir = Path(producer_dir or config.output_dir)
    cases = load_cases(config)
    base_method = next((m for m in config.methods if m.config.variant is Variant.STANDARD),
                       MethodSpec("standard", replace(config.methods[0].config,
                                                       variant=Variant.STANDARD)))
    plain = replace(base_method.config, variant=Variant.STANDARD)
    producers = [m for m in config.methods if m.config.variant is not Variant.STANDARD]
    report = ExperimentReport()
    for case in cases:
        if not isinstance(case, SeriesCase):
            sid, msg = case
            report.rows.extend({"series_id": sid, "producer": m.name, "seed": s, "error": msg}
                               for s in config.seeds for m in producers)
            continue
        for seed in config.seeds:
            w0 = initial_weights(config, seed)
            t0 = time.perf_counter()
            base = train(case.train, plain, w0, config.dims)
            base_mse = metrics.mse(
                forecast(base.weights, case.train, case.test, config.dims, config.forecast),
                case.test)
            for m in producers:
                row = {"series_id": case.id, "producer": m.name, "seed": seed,
                       "baseline_mse": base_mse, "transfer_mse": None, "gain": None, "error": ""}
                path = corrected_path(producer_dir, case.id, m.name, seed)
                try:
                    recs = load_csv(path, case.layout)
                    series = recs[0].values
                    if series.size != case.train.size:
                        raise DataError(f"{path}: length {series.size} != {case.train.size}")
                    out = train(series, plain, w0, config.dims)
                    row["transfer_mse"] = metrics.mse(
                        forecast(out.weights, case.train, case.test, config.dims,
                                 config.forecast), case.test)
                    row["gain"] = base_mse - row["transfer_mse"]
                except (OSError, ValueError) as exc:
                    row["error"] = str(exc)
                report.rows.append(row)
            report.timings[f"{case.id}/transfer/s{seed}"] = time.perf_counter() - t0
    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "transfer.json", "w", encoding="utf-8") as fh:
            json.dump({"rows": report.rows}, fh, indent=1)
        _write_table(out / "transfer.csv", TRANSFER_COLUMNS, report.rows)
        with open(out / "transfer_timings.json", "w", encoding="utf-8") as fh:
            json.dump(report.timings, fh, indent=1)
    return report


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _safe_pearson(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    if len(pairs) < 2:
        return None
    try:
        return metrics.pearson(*zip(*pairs))
    except ValueError:
        return None


def summarize(rows: list[dict]) -> list[dict]:
    """Per-method averages plus the length/accuracy and error-scale/gain correlations."""
    gains = gain_table(rows)
    out = []
    for method in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == method and not r["error"]]
        mg = [g for g in gains if g["method"] == method]
        out.append({
            "method": method,
            "variant": mine[0]["variant"] if mine else None,
            "cells": len(mine),
            "failed": sum(1 for r in rows if r["method"] == method and r["error"]),
            "mean_mse": _mean([r["mse"] for r in mine]),
            "mean_nmse": _mean([r["nmse"] for r in mine]),
            "mean_reconstruction_ability": _mean([r["reconstruction_ability"] for r in mine]),
            "mean_outside_loss": _mean([r["outside_loss"] for r in mine]),
            "pearson_length_mse": _safe_pearson([r["series_length"] for r in mine],
                                                [r["mse"] for r in mine]),
            "pearson_lstm_mse_gain": _safe_pearson([g["lstm_mse"] for g in mg],
                                                   [g["gain"] for g in mg]),
        })
    return out


SUMMARY_COLUMNS = ["method", "variant", "cells", "failed", "mean_mse", "mean_nmse",
                   "mean_reconstruction_ability", "mean_outside_loss",
                   "pearson_length_mse", "pearson_lstm_mse_gain"]


def aggregate_reports(paths, out_dir) -> list[dict]:
    rows = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "report.json"
        with open(p, encoding="utf-8") as fh:
            rows.extend(json.load(fh)["rows"])
    summary = summarize(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
    _write_table(out / "summary.csv", SUMMARY_COLUMNS, summary)
    return summary
