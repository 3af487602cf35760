"""Command line entry point: ``pastprop run|inject|transfer|report``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as ex
from .data import AnomalySpec, SplitSpec, TimeSeriesRecord, fit_normalization, inject_anomaly, \
    load_csv, split, write_csv, write_mask


def _config_from_args(args) -> ex.ExperimentConfig:
    if args.config:
        cfg = ex.ExperimentConfig.load(args.config)
    elif args.input:
        cfg = ex.ExperimentConfig.from_dict({"inputs": [{"path": p, "layout": args.layout}
                                                        for p in args.input]})
    else:
        raise ex.ConfigError("give --config or at least one --input")
    if args.input and args.config:
        cfg.inputs = [ex.InputSpec(p, args.layout) for p in args.input]
    if args.output:
        cfg.output_dir = args.output
    if args.seeds:
        cfg.seeds = args.seeds
    if args.workers:
        cfg.workers = args.workers
    if args.train_fraction is not None:
        SplitSpec(args.train_fraction)
        cfg.train_fraction = args.train_fraction
    dims = {k: getattr(args, k) for k in ("hidden_units", "sample_size", "label_size")
            if getattr(args, k) is not None}
    if dims:
        cfg.dims = replace(cfg.dims, **dims)
    train = {k: getattr(args, k) for k in ("epochs", "learning_rate")
             if getattr(args, k) is not None}
    if train:
        cfg.methods = [ex.MethodSpec(m.name, replace(m.config, **train)) for m in cfg.methods]
    return cfg


def _add_experiment_flags(p):
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--input", action="append", help="CSV input (repeatable)")
    p.add_argument("--layout", choices=["row", "column"], default="row")
    p.add_argument("--output", help="output directory")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hidden-units", type=int)
    p.add_argument("--sample-size", type=int)
    p.add_argument("--label-size", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--workers", type=int)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    report = ex.run_experiment(cfg)
    failed = sum(1 for r in report.rows if r["error"])
    print(f"{len(report.rows) - failed}/{len(report.rows)} cells ok -> {cfg.output_dir}")
    return 0 if report.ok else 1


def cmd_transfer(args) -> int:
    cfg = _config_from_args(args)
    report = ex.run_correction_transfer(cfg, args.producer)
    failed = sum(1 for r in report.rows if r["error"])
    print(f"{len(report.rows) - failed}/{len(report.rows)} transfer rows ok -> {cfg.output_dir}")
    return 0 if failed == 0 else 1


def cmd_report(args) -> int:
    summary = ex.aggregate_reports(args.reports, args.output)
    for s in summary:
        print(f"{s['method']:>16}  cells={s['cells']}  mean_mse={s['mean_mse']}")
    return 0


def cmd_inject(args) -> int:
    """Write an anomalous copy of each series in original units plus a zone mask.

    The anomaly is built on the training-normalized scale and mapped back.
    """
    records = load_csv(args.input, args.layout)
    out = Path(args.output)
    out_records = []
    for rec in records:
        train, _ = split(rec.values, SplitSpec(args.train_fraction))
        params = fit_normalization(train)
        spec = AnomalySpec(args.start, args.length, args.level, args.chunks, args.seed)
        if spec.start + spec.length > train.size:
            raise ValueError(f"series {rec.id}: anomaly zone must lie in the training part "
                             f"(first {train.size} values)")
        norm, mask = inject_anomaly(params.apply(rec.values), spec)
        values = rec.values.copy()
        values[mask] = params.invert(norm[mask])
        out_records.append(TimeSeriesRecord(rec.id, values))
        write_mask(out.with_name(f"{out.stem}.{rec.id}.mask.csv"), mask)
    write_csv(out, out_records, args.layout)
    print(f"wrote {len(out_records)} series -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pastprop", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train Standard LSTM and Pastprop variants")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("transfer", help="retrain a plain LSTM on corrected series")
    _add_experiment_flags(p)
    p.add_argument("--producer", help="output directory of the producing run "
                                      "(defaults to the config's output_dir)")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("inject", help="write a copy of a dataset with artificial anomalies")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--layout", choices=["row", "column"], default="row")
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--level", type=int, choices=[0, 25, 50], required=True)
    p.add_argument("--chunks", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("report", help="aggregate report.json files")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("--output", default="summary")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ex.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
