import json
import math

import numpy as np
import pytest

from survlpb import experiment as E
from survlpb.core import Dataset, write_dataset_csv
from survlpb.datagen import generate

SMALL = dict(setting=1, n_train=150, n_calib=150, n_test=100, grid_step=0.01,
             methods=["IPCW", "AIPCW", "QR_Y"], estimators=["cox", "km"], replications=2, master_seed=3)


def small(**kw):
    return E.ExperimentConfig.from_dict({**SMALL, **kw})


class TestConfig:
    def test_defaults(self):
        cfg = E.ExperimentConfig()
        assert cfg.alpha == 0.1 and cfg.grid_step == 0.001 and cfg.positivity_floor == 0.05

    @pytest.mark.parametrize("field, value", [
        ("alpha", 1.5), ("n_train", 0), ("grid_step", 0.3), ("methods", ["FOO"]),
        ("estimators", ["rsf"]), ("replications", -1), ("setting", 7), ("positivity_floor", 0.0),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(E.ConfigError, match=field if field != "methods" else "method"):
            small(**{field: value})

    def test_unknown_field(self):
        with pytest.raises(E.ConfigError, match="unknown config field"):
            E.ExperimentConfig.from_dict({"settting": 1})

    def test_setting_and_data_exclusive(self):
        with pytest.raises(E.ConfigError):
            E.ExperimentConfig.from_dict({"setting": 1, "data_path": "x.csv"})
        assert E.ExperimentConfig.from_dict({"data_path": "x.csv"}).setting is None

    def test_json_roundtrip(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(small().to_dict()))
        assert E.ExperimentConfig.from_json(p) == small()

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(E.ConfigError, match="line 1"):
            E.ExperimentConfig.from_json(p)

    def test_estimator_pair(self):
        assert E.estimator_pair("cox") == ("cox", "cox")
        assert E.estimator_pair("knn_km/km") == ("knn_km", "km")


class TestRun:
    def test_shape(self):
        rows = E.run_experiment(small())
        # 2 reps x (2 methods x 2 estimators + 1 baseline)
        assert len(rows) == 10
        assert [r["replication"] for r in rows] == [0] * 5 + [1] * 5
        assert all(r["metric"] == "oracle" and r["n_test"] == 100 for r in rows)
        assert {r["estimator"] for r in rows if r["method"] == "QR_Y"} == {"none"}
        assert all(0 <= r["coverage"] <= 1 for r in rows)

    def test_zero_replications(self):
        rows = E.run_experiment(small(replications=0))
        assert rows == [] and E.format_rows(rows, E.RESULT_COLUMNS).count("\n") == 1

    def test_byte_identical_across_threads(self):
        cfg = small(replications=4)
        a = E.format_rows(E.run_experiment(cfg, threads=1), E.RESULT_COLUMNS)
        b = E.format_rows(E.run_experiment(cfg, threads=3), E.RESULT_COLUMNS)
        assert a == b

    def test_replication_independent_of_schedule(self):
        cfg = small(replications=3)
        assert E.run_replication(cfg, 2) == E.run_experiment(cfg)[10:]

    def test_real_data_metrics(self, tmp_path):
        p = tmp_path / "d.csv"
        write_dataset_csv(generate(1, 300, 0).observed(), p)
        cfg = E.ExperimentConfig.from_dict({**SMALL, "setting": None, "data_path": str(p),
                                            "n_train": 100, "n_calib": 100, "n_test": 100})
        rows = E.run_experiment(cfg)
        assert {r["metric"] for r in rows} == {"IPCW", "AIPCW", "OR"}
        assert rows[0]["setting"] == "d.csv"

    def test_error_rows_recorded(self, tmp_path):
        # constant covariate: the Cox fit fails, KM still works
        d = Dataset(np.ones((300, 2)), generate(1, 300, 0).event_time, np.ones(300, bool))
        p = tmp_path / "const.csv"
        write_dataset_csv(d, p)
        cfg = E.ExperimentConfig.from_dict({**SMALL, "setting": None, "data_path": str(p), "methods": ["IPCW"],
                                            "n_train": 100, "n_calib": 100, "n_test": 100, "replications": 1})
        rows = E.run_experiment(cfg)
        cox = [r for r in rows if r["estimator"] == "cox"]
        km = [r for r in rows if r["estimator"] == "km"]
        assert all(r["flag"] == "error:ValueError" and math.isnan(r["coverage"]) for r in cox)
        assert all(r["flag"] == "" for r in km)

    def test_oversized_split_is_error(self, tmp_path):
        p = tmp_path / "d.csv"
        write_dataset_csv(generate(1, 50, 0).observed(), p)
        cfg = E.ExperimentConfig.from_dict({**SMALL, "setting": None, "data_path": str(p), "replications": 1})
        rows = E.run_experiment(cfg)
        assert rows and all(r["flag"].startswith("error:") for r in rows)


class TestResultsIO:
    def test_roundtrip(self, tmp_path):
        rows = E.run_experiment(small(replications=1))
        p = tmp_path / "r.csv"
        E.write_results(rows, p)
        back = E.read_results(p)
        assert [r["coverage"] for r in back] == [r["coverage"] for r in rows]

    def test_schema_mismatch(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="schema mismatch"):
            E.read_results(p)

    def test_bad_row(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(",".join(E.RESULT_COLUMNS) + "\n1,2\n")
        with pytest.raises(ValueError, match="row 2"):
            E.read_results(p)


def _r(cov, method="IPCW", lpb=1.0):
    return {"method": method, "estimator": "cox", "metric": "oracle", "coverage": cov, "mean_lpb": lpb}


class TestAggregate:
    def test_single_row(self):
        (s,) = E.aggregate([_r(0.9)])
        assert s["n"] == 1 and s["sd_coverage"] == 0.0 and s["mean_coverage"] == 0.9

    def test_two_rows(self):
        (s,) = E.aggregate([_r(0.88, lpb=1.0), _r(0.92, lpb=3.0)])
        assert s["mean_coverage"] == pytest.approx(0.90)
        assert s["sd_coverage"] == pytest.approx(0.0283, abs=1e-4)
        assert s["min_coverage"] == 0.88 and s["max_coverage"] == 0.92 and s["mean_mean_lpb"] == 2.0

    def test_error_rows_excluded(self):
        (s,) = E.aggregate([_r(0.9), _r(math.nan, lpb=math.nan)])
        assert s["n"] == 1 and s["n_error"] == 1 and s["mean_coverage"] == 0.9

    def test_empty(self):
        assert E.aggregate([]) == []

    def test_sorted_groups(self):
        out = E.aggregate([_r(0.9, "IPCW"), _r(0.9, "AIPCW")])
        assert [s["method"] for s in out] == ["AIPCW", "IPCW"]
