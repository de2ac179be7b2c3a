"""Replicated experiments: configuration, the replication loop, results and summaries.

Each replication draws (or splits) its data from its own seed stream, so the
rows it produces do not depend on how replications are scheduled.  Rows are
written in replication order whatever the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .baselines import BASELINE_METHODS, make_baseline_lpb
from .calibration import BetaGrid, CalibrationConfig, LPBModel, Method, calibrate
from .core import DEFAULT_POSITIVITY_FLOOR, Dataset, FullData, SplitIndices, read_dataset_csv
from .datagen import generate, get_setting, replication_seed
from .evaluation import aipcw_coverage_metric, ipcw_coverage_metric, oracle_coverage, or_coverage_metric
from .nuisance import ESTIMATORS, TargetKind, fit_estimator
from .scores import QuantileScore

RESULT_COLUMNS = (
    "replication", "setting", "method", "estimator", "metric", "alpha",
    "beta_hat", "coverage", "mean_lpb", "median_lpb", "n_test", "flag",
)
SUMMARY_COLUMNS = (
    "method", "estimator", "metric", "n", "n_error",
    "mean_coverage", "sd_coverage", "min_coverage", "max_coverage", "mean_mean_lpb",
)
CONFORMAL_METHODS = tuple(m.value for m in Method)
REAL_DATA_METRICS = ("IPCW", "AIPCW", "OR")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment description, loaded from a JSON document.

    Exactly one of ``setting`` (synthetic benchmark id) and ``data_path``
    (dataset CSV) is set.  An estimator entry is either one name used for both
    nuisances or ``"event/censoring"``, e.g. ``"knn_km/km"``.
    """

    setting: int | None = 1
    data_path: str | None = None
    n_train: int = 1000
    n_calib: int = 1000
    n_test: int = 1000
    alpha: float = 0.1
    grid_step: float = 0.001
    methods: tuple = ("IPCW", "AIPCW")
    estimators: tuple = ("cox",)
    replications: int = 100
    master_seed: int = 0
    positivity_floor: float = DEFAULT_POSITIVITY_FLOOR
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        self.validate()

    def validate(self):
        if (self.setting is None) == (self.data_path is None):
            raise ConfigError("set exactly one of 'setting' and 'data_path'")
        if self.setting is not None:
            try:
                get_setting(self.setting)
            except ValueError as exc:
                raise ConfigError(f"field 'setting': {exc}") from None
        for name in ("n_train", "n_calib", "n_test"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"field {name!r} must be a positive integer, got {v!r}")
        if not isinstance(self.replications, int) or self.replications < 0:
            raise ConfigError(f"field 'replications' must be a nonnegative integer, got {self.replications!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"field 'alpha' must lie in (0, 1), got {self.alpha!r}")
        if not 0 < self.positivity_floor < 1:
            raise ConfigError(f"field 'positivity_floor' must lie in (0, 1), got {self.positivity_floor!r}")
        steps = 1.0 / self.grid_step if self.grid_step > 0 else math.nan
        if not (self.grid_step > 0 and abs(steps - round(steps)) < 1e-9):
            raise ConfigError(f"field 'grid_step' must divide 1 into whole steps, got {self.grid_step!r}")
        if not self.methods:
            raise ConfigError("field 'methods' must be nonempty")
        for m in self.methods:
            if m not in CONFORMAL_METHODS and m not in BASELINE_METHODS:
                raise ConfigError(f"field 'methods': unknown method {m!r}")
        if any(m in CONFORMAL_METHODS for m in self.methods) and not self.estimators:
            raise ConfigError("field 'estimators' must be nonempty for conformal methods")
        for e in self.estimators:
            for part in estimator_pair(e):
                if part not in ESTIMATORS:
                    raise ConfigError(f"field 'estimators': unknown estimator {part!r} in {e!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config field(s): {', '.join(extra)}")
        if "data_path" in doc and "setting" not in doc:
            doc = {**doc, "setting": None}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["estimators"] = list(self.estimators)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**self.to_dict(), **changes})

    @property
    def calibration(self) -> CalibrationConfig:
        return CalibrationConfig(self.alpha, BetaGrid.uniform(self.grid_step), self.positivity_floor)


def estimator_pair(name: str) -> tuple[str, str]:
    parts = name.split("/")
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise ConfigError(f"estimator entry {name!r} must be 'name' or 'event/censoring'")


# ---------------------------------------------------------------------------
# one replication


@dataclass
class _Split:
    train: Dataset
    calib: Dataset
    test: Dataset
    test_full: FullData | None
    pooled: Dataset  # train then calib, for the baselines
    pooled_split: SplitIndices


def _make_split(cfg: ExperimentConfig, r: int, source: Dataset | None) -> _Split:
    a, b, c = cfg.n_train, cfg.n_calib, cfg.n_test
    if source is None:
        full = generate(cfg.setting, a + b + c, replication_seed(cfg.master_seed, r))
        obs = full.observed()
        order = np.arange(full.n)
        test_full = full.subset(order[a + b:])
    else:
        if a + b + c > source.n:
            raise ValueError(f"n_train + n_calib + n_test = {a + b + c} exceeds dataset size {source.n}")
        obs = source
        order = np.random.default_rng(replication_seed(cfg.master_seed, r)).permutation(source.n)
        test_full = None
    tr, ca, te = order[:a], order[a:a + b], order[a + b:a + b + c]
    pooled = obs.subset(np.concatenate([tr, ca]))
    split = SplitIndices(np.arange(a), np.arange(a, a + b))
    return _Split(obs.subset(tr), obs.subset(ca), obs.subset(te), test_full, pooled, split)


def _row(cfg, r, method, estimator, metric, beta_hat=math.nan, coverage=math.nan,
         lpb=None, n_test=0, flag=""):
    if lpb is not None:
        finite = lpb[np.isfinite(lpb)]
        mean_l = float(finite.mean()) if finite.size else math.nan
        med_l = float(np.median(finite)) if finite.size else math.nan
    else:
        mean_l = med_l = math.nan
    setting = cfg.setting if cfg.setting is not None else Path(cfg.data_path).name
    return {
        "replication": r, "setting": setting, "method": method, "estimator": estimator,
        "metric": metric, "alpha": cfg.alpha, "beta_hat": beta_hat, "coverage": coverage,
        "mean_lpb": mean_l, "median_lpb": med_l, "n_test": n_test, "flag": flag,
    }


def _error_flag(exc: BaseException) -> str:
    return f"error:{type(exc).__name__}"


def _evaluate(cfg, r, method, estimator, split: _Split, lpb, beta_hat, flag, event_model, censor_model):
    L = np.asarray(lpb.predict(split.test.X), dtype=float)
    n = split.test.n
    if split.test_full is not None:
        cov = oracle_coverage(split.test_full, L)
        return [_row(cfg, r, method, estimator, "oracle", beta_hat, cov, L, n, flag)]
    floor = cfg.positivity_floor
    rows = []
    for metric in REAL_DATA_METRICS:
        if metric == "IPCW":
            cov = ipcw_coverage_metric(split.test, L, censor_model, floor)
        elif metric == "AIPCW":
            cov = aipcw_coverage_metric(split.test, L, censor_model, event_model, floor)
        else:
            cov = or_coverage_metric(split.test, event_model, L)
        rows.append(_row(cfg, r, method, estimator, metric, beta_hat, cov, L, n, flag))
    return rows


def _error_rows(cfg, r, method, estimator, exc, split):
    metrics = ("oracle",) if cfg.setting is not None else REAL_DATA_METRICS
    n = split.test.n if split is not None else 0
    return [_row(cfg, r, method, estimator, m, n_test=n, flag=_error_flag(exc)) for m in metrics]


def run_replication(cfg: ExperimentConfig, r: int, source: Dataset | None = None) -> list[dict]:
    """Rows for replication ``r``: one per method, estimator and metric."""
    conformal = [m for m in cfg.methods if m in CONFORMAL_METHODS]
    baselines = [m for m in cfg.methods if m in BASELINE_METHODS]
    try:
        split = _make_split(cfg, r, source)
    except Exception as exc:  # recorded, not dropped
        rows = []
        for e in cfg.estimators if conformal else ():
            for m in conformal:
                rows += _error_rows(cfg, r, m, e, exc, None)
        for m in baselines:
            rows += _error_rows(cfg, r, m, "none", exc, None)
        return rows

    ccfg = cfg.calibration
    rows: list[dict] = []
    first_models = None
    for estimator in cfg.estimators:
        t_name, c_name = estimator_pair(estimator)
        try:
            event_model = fit_estimator(t_name, split.train, TargetKind.EventTime)
            censor_model = fit_estimator(c_name, split.train, TargetKind.CensoringTime)
        except Exception as exc:
            for m in conformal:
                rows += _error_rows(cfg, r, m, estimator, exc, split)
            continue
        if first_models is None:
            first_models = (event_model, censor_model)
        for m in conformal:
            try:
                res = calibrate(split.calib, m, ccfg, censor_model=censor_model, survival_model=event_model)
                lpb = LPBModel(QuantileScore(event_model, ccfg.grid.values), res.beta_hat, event_model)
                flag = "degenerate" if res.degenerate else ""
                rows += _evaluate(cfg, r, m, estimator, split, lpb, res.beta_hat, flag, event_model, censor_model)
            except Exception as exc:
                rows += _error_rows(cfg, r, m, estimator, exc, split)

    for m in baselines:
        try:
            lpb = make_baseline_lpb(split.pooled, m, cfg.alpha, split.pooled_split)
            if split.test_full is None and first_models is None:
                first_models = (
                    fit_estimator("km", split.train, TargetKind.EventTime),
                    fit_estimator("km", split.train, TargetKind.CensoringTime),
                )
            ev, ce = first_models if first_models is not None else (None, None)
            rows += _evaluate(cfg, r, m, "none", split, lpb, math.nan, "", ev, ce)
        except Exception as exc:
            rows += _error_rows(cfg, r, m, "none", exc, split)
    return rows


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ConfigError("threads must be nonnegative")
    return threads


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """All replications; rows ordered by replication then method loop order."""
    source = read_dataset_csv(cfg.data_path) if cfg.data_path is not None else None
    reps = range(cfg.replications)
    workers = resolve_threads(threads)
    if workers == 1 or cfg.replications <= 1:
        per_rep = [run_replication(cfg, r, source) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(lambda r: run_replication(cfg, r, source), reps))
    return [row for rows in per_rep for row in rows]


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def format_rows(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def write_results(rows, path) -> None:
    Path(path).write_text(format_rows(rows, RESULT_COLUMNS), encoding="utf-8")


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a results header") from None
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"{path}: schema mismatch; expected columns {','.join(RESULT_COLUMNS)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(RESULT_COLUMNS):
                raise ValueError(f"{path}: row {lineno}: expected {len(RESULT_COLUMNS)} fields, got {len(rec)}")
            row = dict(zip(RESULT_COLUMNS, rec))
            try:
                for c in ("alpha", "beta_hat", "coverage", "mean_lpb", "median_lpb"):
                    row[c] = float(row[c])
                row["n_test"] = int(row["n_test"])
                row["replication"] = int(row["replication"])
            except ValueError as exc:
                raise ValueError(f"{path}: row {lineno}: {exc}") from None
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# aggregation


def aggregate(rows) -> list[dict]:
    """Per (method, estimator, metric): coverage mean, sample sd, min, max; mean of mean_lpb.

    Error rows (NaN coverage) are counted in ``n_error`` and excluded from the
    statistics.  Groups are sorted by key.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["method"], row["estimator"], row["metric"]), []).append(row)
    out = []
    for key in sorted(groups):
        g = groups[key]
        cov = np.array([x["coverage"] for x in g], dtype=float)
        ok = ~np.isnan(cov)
        c = cov[ok]
        lp = np.array([x["mean_lpb"] for x in g], dtype=float)[ok]
        lp = lp[~np.isnan(lp)]
        out.append({
            "method": key[0], "estimator": key[1], "metric": key[2],
            "n": int(c.size), "n_error": int((~ok).sum()),
            "mean_coverage": float(c.mean()) if c.size else math.nan,
            "sd_coverage": float(c.std(ddof=1)) if c.size > 1 else (0.0 if c.size else math.nan),
            "min_coverage": float(c.min()) if c.size else math.nan,
            "max_coverage": float(c.max()) if c.size else math.nan,
            "mean_mean_lpb": float(lp.mean()) if lp.size else math.nan,
        })
    return out


def aggregate_files(paths) -> list[dict]:
    rows = []
    for p in paths:
        rows += read_results(p)
    return aggregate(rows)
