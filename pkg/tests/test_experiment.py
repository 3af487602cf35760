import csv
import json

import numpy as np
import pytest
import yaml

from pastprop import cli
from pastprop import experiment as ex
from pastprop.data import TimeSeriesRecord, load_csv, seasonal_series, write_csv


def small_config(tmp_path, inputs, methods=None, **extra):
    raw = {
        "inputs": inputs,
        "lstm": {"hidden_units": 6, "sample_size": 5, "label_size": 1},
        "training": {"epochs": 3, "learning_rate": 0.05},
        "methods": methods or [
            {"name": "lstm", "variant": "standard"},
            {"name": "epoch", "variant": "epochwise", "correction_rate": 0.5},
            {"name": "inst", "variant": "instancewise", "correction_rate": 0.5},
            {"name": "sel", "variant": "selective", "correction_rate": 0.5, "epoch_embargo": 1,
             "neighborhood_size": 2, "top_k": 5},
        ],
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "out"),
        **extra,
    }
    return ex.ExperimentConfig.from_dict(raw)


@pytest.fixture
def dataset(tmp_path):
    recs = [TimeSeriesRecord(f"s{i}", seasonal_series(60 + 10 * i, period=8, seed=i)) for i in range(2)]
    recs.append(TimeSeriesRecord("flat", np.full(60, 3.0)))
    path = tmp_path / "data.csv"
    write_csv(path, recs, "row")
    return path


def test_config_defaults():
    cfg = ex.ExperimentConfig.from_dict({"inputs": ["x.csv"]})
    assert cfg.dims.sample_size == 5 and cfg.dims.label_size == 1
    assert cfg.dims.hidden_units == 200
    m = cfg.methods[0].config
    assert m.learning_rate == 0.001 and m.epochs == 50
    assert cfg.train_fraction == 0.7 and len(cfg.seeds) == 5


def test_config_errors():
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_dict({})
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_dict({"inputs": ["a"], "seeds": []})
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_dict({"inputs": ["a"], "methods": [{"name": "x", "bogus": 1}]})
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_dict({"inputs": ["a"], "methods": [{"name": "x"}, {"name": "x"}]})


def test_config_roundtrip(tmp_path, dataset):
    cfg = small_config(tmp_path, [str(dataset)], anomaly={"start": 5, "length": 6, "level": 25})
    again = ex.ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_run_experiment_outputs(tmp_path, dataset):
    cfg = small_config(tmp_path, [str(dataset)], anomaly={"start": 10, "length": 8, "level": 0})
    report = ex.run_experiment(cfg)
    out = tmp_path / "out"
    # 3 series x 4 methods x 2 seeds, flat series recorded as errors
    assert len(report.rows) == 24
    errors = [r for r in report.rows if r["error"]]
    assert len(errors) == 8 and all(r["series_id"] == "flat" for r in errors)
    assert not report.ok
    for name in ("report.json", "report.csv", "gains.csv", "config.resolved.yaml", "timings.json"):
        assert (out / name).exists()
    # fairness: identical initial weights for every method in a (series, seed) cell
    for sid in ("s0", "s1"):
        for seed in (0, 1):
            sums = {r["init_checksum"] for r in report.rows
                    if r["series_id"] == sid and r["seed"] == seed}
            assert len(sums) == 1
    good = [r for r in report.rows if not r["error"]]
    assert all(r["reconstruction_ability"] is not None for r in good)
    std = [r for r in good if r["variant"] == "standard"]
    assert all(r["total_correction"] == 0 and r["outside_loss"] == 0 for r in std)
    corrected = load_csv(out / "corrected" / "s0.sel.s1.corrected.csv")[0]
    assert corrected.values.size == good[0]["train_length"]
    assert (out / "masks" / "s0.mask.csv").exists()
    assert (out / "observed" / "s0.train.csv").exists()
    with open(out / "gains.csv") as fh:
        gains = list(csv.DictReader(fh))
    assert len(gains) == 2 * 2 * 3
    g = gains[0]
    assert float(g["gain"]) == float(g["lstm_mse"]) - float(g["variant_mse"])
    resolved = yaml.safe_load((out / "config.resolved.yaml").read_text())
    assert resolved["lstm"]["hidden_units"] == 6


def test_rerun_is_byte_identical(tmp_path, dataset):
    cfg = small_config(tmp_path, [str(dataset)])
    ex.run_experiment(cfg)
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").glob("report.*")}
    first["gains.csv"] = (tmp_path / "out" / "gains.csv").read_bytes()
    ex.run_experiment(cfg)
    for name, data in first.items():
        assert (tmp_path / "out" / name).read_bytes() == data


def test_standard_only_smoke(tmp_path):
    path = tmp_path / "one.csv"
    write_csv(path, [TimeSeriesRecord("x", seasonal_series(100, seed=3))], "column")
    cfg = ex.ExperimentConfig.from_dict({
        "inputs": [{"path": str(path), "layout": "column"}],
        "lstm": {"hidden_units": 8}, "training": {"epochs": 5},
        "methods": [{"name": "standard", "variant": "standard"}],
        "seeds": [0], "output_dir": str(tmp_path / "o")})
    report = ex.run_experiment(cfg)
    assert len(report.rows) == 1 and report.ok
    assert report.rows[0]["train_length"] == 70 and report.rows[0]["test_length"] == 30
    assert (tmp_path / "o" / "corrected" / "one.standard.s0.corrected.csv").exists()


def test_m4_mode_uses_test_file(tmp_path):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    write_csv(train, [TimeSeriesRecord("H1", seasonal_series(40, period=8, seed=1))], "row")
    future = seasonal_series(48, period=8, seed=1)[40:]
    write_csv(test, [TimeSeriesRecord("H1", future)], "row")
    cfg = small_config(tmp_path, [{"path": str(train), "test_path": str(test)}],
                       methods=[{"name": "lstm", "variant": "standard"}])
    (case,) = ex.load_cases(cfg)
    assert case.train.size == 40 and case.test.size == 8
    assert np.allclose(case.params.invert(case.test), future, rtol=1e-12)


def test_forecast_modes():
    from pastprop.kernel import SeededRng
    from pastprop.lstm import LstmDims, init_weights, predict
    d = LstmDims(1, 4, 3, 2)
    w = init_weights(d, SeededRng(1))
    hist, test = np.linspace(0, 1, 10), np.linspace(1, 0, 5)
    rolling = ex.forecast(w, hist, test, d, "rolling")
    full = np.concatenate([hist[-3:], test])
    assert np.array_equal(rolling[:2], predict(w, full[0:3], d))
    assert np.array_equal(rolling[4:], predict(w, full[4:7], d)[:1])
    rec = ex.forecast(w, hist, test, d, "recursive")
    first = predict(w, hist[-3:], d)
    assert np.array_equal(rec[:2], first)
    assert np.array_equal(rec[2:4], predict(w, np.array([hist[-1], *first]), d))


def test_transfer(tmp_path, dataset):
    cfg = small_config(tmp_path, [str(dataset)], methods=[
        {"name": "lstm", "variant": "standard"},
        {"name": "zero", "variant": "epochwise", "correction_rate": 0.0},
        {"name": "sel", "variant": "selective", "correction_rate": 0.5, "top_k": 4},
    ], anomaly={"start": 10, "length": 8, "level": 0})
    ex.run_experiment(cfg)
    (tmp_path / "out" / "corrected" / "s1.sel.s0.corrected.csv").unlink()
    report = ex.run_correction_transfer(cfg)
    good = [r for r in report.rows if not r["error"]]
    # 2 usable series x 2 producers x 2 seeds, minus the deleted file
    assert len(report.rows) == 2 * 2 * 2 + 4 and len(good) == 7
    for r in good:
        assert r["gain"] == r["baseline_mse"] - r["transfer_mse"]
        if r["producer"] == "zero":
            assert r["transfer_mse"] == r["baseline_mse"]
    missing = [r for r in report.rows if r["series_id"] == "s1" and r["producer"] == "sel"
               and r["seed"] == 0]
    assert missing[0]["error"]
    assert (tmp_path / "out" / "transfer.csv").exists()


def test_summarize(tmp_path, dataset):
    cfg = small_config(tmp_path, [str(dataset)])
    ex.run_experiment(cfg)
    summary = ex.aggregate_reports([tmp_path / "out"], tmp_path / "sum")
    by = {s["method"]: s for s in summary}
    assert by["lstm"]["cells"] == 4 and by["lstm"]["failed"] == 2
    assert by["sel"]["pearson_lstm_mse_gain"] is None or -1 <= by["sel"]["pearson_lstm_mse_gain"] <= 1
    assert json.loads((tmp_path / "sum" / "summary.json").read_text())[0]["method"] == "lstm"


def test_cli_run_report_transfer(tmp_path, dataset):
    cfg_path = tmp_path / "exp.yaml"
    cfg = small_config(tmp_path, [str(dataset)])
    cfg_path.write_text(yaml.safe_dump(cfg.to_dict()))
    out = tmp_path / "cli"
    code = cli.main(["run", "--config", str(cfg_path), "--output", str(out), "--seeds", "3",
                     "--epochs", "2"])
    assert code == 1  # the flat series fails, the sweep still finishes
    rows = json.loads((out / "report.json").read_text())["rows"]
    assert {r["seed"] for r in rows} == {3}
    resolved = yaml.safe_load((out / "config.resolved.yaml").read_text())
    assert all(m["epochs"] == 2 for m in resolved["methods"])
    assert cli.main(["report", str(out), "--output", str(tmp_path / "agg")]) == 0
    assert (tmp_path / "agg" / "summary.csv").exists()
    assert cli.main(["transfer", "--config", str(cfg_path), "--output", str(out),
                     "--seeds", "3", "--epochs", "2"]) == 1
    assert (out / "transfer.csv").exists()


def test_cli_run_ok_exit_code(tmp_path):
    path = tmp_path / "one.csv"
    write_csv(path, [TimeSeriesRecord("x", seasonal_series(60, seed=3))], "row")
    code = cli.main(["run", "--input", str(path), "--output", str(tmp_path / "o"), "--seeds", "0",
                     "--epochs", "1", "--hidden-units", "4"])
    assert code == 0


def test_cli_inject(tmp_path):
    src = tmp_path / "in.csv"
    values = seasonal_series(50, seed=2)
    write_csv(src, [TimeSeriesRecord("a", values)], "row")
    dst = tmp_path / "anom.csv"
    assert cli.main(["inject", str(src), str(dst), "--start", "5", "--length", "10",
                     "--level", "0"]) == 0
    out = load_csv(dst)[0].values
    train_min = values[:35].min()
    assert np.allclose(out[5:15], train_min, rtol=0, atol=1e-12)
    assert np.array_equal(out[:5], values[:5]) and np.array_equal(out[15:], values[15:])
    mask = (tmp_path / "anom.a.mask.csv").read_text().split()
    assert mask[0] == "anomaly" and mask[6:16] == ["1"] * 10
    assert cli.main(["inject", str(src), str(dst), "--start", "30", "--length", "10",
                     "--level", "0"]) == 2


def test_cli_config_error(capsys):
    assert cli.main(["run"]) == 2
    assert "error" in capsys.readouterr().err
