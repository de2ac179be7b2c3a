"""Command-line entry point: ``survlpb {simulate,calibrate,evaluate,aggregate}``.

simulate   run a synthetic-benchmark experiment from a JSON config
evaluate   run the same protocol on a dataset CSV (IPCW, AIPCW and OR metrics)
calibrate  fit nuisances and calibrate once on a dataset CSV; emit beta_hat and LPBs
aggregate  summarize one or more results CSVs

Exit status is 0 on success and nonzero on any hard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibration import BetaGrid, CalibrationConfig, LPBModel, calibrate
from .core import DEFAULT_POSITIVITY_FLOOR, read_dataset_csv, split_dataset
from .experiment import (
    CONFORMAL_METHODS,
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    ConfigError,
    ExperimentConfig,
    aggregate_files,
    estimator_pair,
    format_rows,
    run_experiment,
)
from .nuisance import TargetKind, fit_estimator
from .scores import QuantileScore


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.from_json(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "data", None):
        changes.update(data_path=args.data, setting=None)
    return cfg.replace(**changes) if changes else cfg


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _cmd_run(args, *, synthetic: bool) -> int:
    cfg = _load_config(args)
    if synthetic and cfg.setting is None:
        raise ConfigError("simulate needs a 'setting'; use evaluate for dataset CSVs")
    if not synthetic and cfg.data_path is None:
        raise ConfigError("evaluate needs 'data_path' (or --data)")
    rows = run_experiment(cfg, threads=args.threads)
    _emit(format_rows(rows, RESULT_COLUMNS), args.out or cfg.output)
    return 0


def _cmd_calibrate(args) -> int:
    data = read_dataset_csv(args.data)
    alpha, step, floor, seed = args.alpha, args.grid_step, args.positivity_floor, args.seed
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        alpha = doc.get("alpha", alpha)
        step = doc.get("grid_step", step)
        floor = doc.get("positivity_floor", floor)
        if seed is None:
            seed = doc.get("master_seed")
    seed = 0 if seed is None else seed
    if args.method not in CONFORMAL_METHODS:
        raise ConfigError(f"--method must be one of {', '.join(CONFORMAL_METHODS)}")
    ccfg = CalibrationConfig(alpha, BetaGrid.uniform(step), floor)
    split = split_dataset(data, args.calib_fraction, seed)
    train, calib = data.subset(split.train), data.subset(split.calib)
    t_name, c_name = estimator_pair(args.estimator)
    event_model = fit_estimator(t_name, train, TargetKind.EventTime)
    censor_model = fit_estimator(c_name, train, TargetKind.CensoringTime)
    res = calibrate(calib, args.method, ccfg, censor_model=censor_model, survival_model=event_model)
    lpb = LPBModel(QuantileScore(event_model, ccfg.grid.values), res.beta_hat, event_model)
    target = read_dataset_csv(args.predict) if args.predict else data
    L = lpb.predict(target.X)
    if args.result_json:
        Path(args.result_json).write_text(res.to_json(), encoding="utf-8")
    sys.stderr.write(f"beta_hat={res.beta_hat!r} flag={'degenerate' if res.degenerate else 'ok'}\n")
    lines = ["row,lpb"] + [f"{i},{float(v)!r}" for i, v in enumerate(L)]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_aggregate(args) -> int:
    summary = aggregate_files(args.results)
    _emit(format_rows(summary, SUMMARY_COLUMNS), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="survlpb", description="Calibrated lower predictive bounds for censored survival times.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_text in (("simulate", "run a synthetic experiment"),
                            ("evaluate", "run the protocol on a dataset CSV")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="experiment JSON")
        s.add_argument("--out", help="results CSV (default: config output, else stdout)")
        s.add_argument("--threads", type=int, default=1, help="replication workers; 0 = all cores")
        s.add_argument("--seed", type=int, help="override master_seed")
        if name == "evaluate":
            s.add_argument("--data", help="dataset CSV (overrides data_path)")

    c = sub.add_parser("calibrate", help="fit, calibrate and emit per-subject LPBs")
    c.add_argument("--data", required=True, help="dataset CSV: x1..xd,time,event")
    c.add_argument("--config", help="JSON supplying alpha, grid_step, positivity_floor, master_seed")
    c.add_argument("--method", default="AIPCW")
    c.add_argument("--estimator", default="cox", help="name or event/censoring pair")
    c.add_argument("--alpha", type=float, default=0.1)
    c.add_argument("--grid-step", type=float, default=0.001)
    c.add_argument("--positivity-floor", type=float, default=DEFAULT_POSITIVITY_FLOOR)
    c.add_argument("--calib-fraction", type=float, default=0.5)
    c.add_argument("--seed", type=int)
    c.add_argument("--predict", help="CSV whose covariates get LPBs (default: --data)")
    c.add_argument("--result-json", help="write the calibration result here")
    c.add_argument("--out", help="LPB CSV (default stdout)")
    c.add_argument("--threads", type=int, default=1, help="accepted for symmetry; calibration is single-threaded")

    a = sub.add_parser("aggregate", help="summarize results CSVs")
    a.add_argument("results", nargs="+")
    a.add_argument("--out", help="summary CSV (default stdout)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_run(args, synthetic=True)
        if args.command == "evaluate":
            return _cmd_run(args, synthetic=False)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        return _cmd_aggregate(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"survlpb {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
