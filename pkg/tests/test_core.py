import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survlpb.core import (
    CurveBatch,
    Dataset,
    FullData,
    FullRecord,
    ObservedRecord,
    StepSurvivalCurve,
    curve_to_cumhaz,
    evaluate_curve,
    forward_fill_onto,
    read_dataset_csv,
    read_full_csv,
    split_dataset,
    survival_quantile,
    write_dataset_csv,
    write_full_csv,
)

from helpers import random_curve

CURVE = StepSurvivalCurve([2, 5], [0.5, 0.0])


@st.composite
def curves(draw):
    k = draw(st.integers(1, 8))
    gaps = draw(st.lists(st.floats(0.01, 5), min_size=k, max_size=k))
    drops = draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))
    knots = np.cumsum(gaps)
    values = np.cumprod(1 - np.array(drops))
    return StepSurvivalCurve(knots, values)


class TestEvaluate:
    @pytest.mark.parametrize("t, expected", [(1, 1.0), (2, 0.5), (4.9, 0.5), (5, 0.0), (100, 0.0), (0, 1.0)])
    def test_hand_values(self, t, expected):
        assert evaluate_curve(CURVE, t) == expected

    def test_vectorized(self):
        np.testing.assert_array_equal(CURVE([1, 2, 5]), [1.0, 0.5, 0.0])

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            evaluate_curve(CURVE, -1)

    def test_empty_curve_is_one(self):
        assert evaluate_curve(StepSurvivalCurve([], []), 3.0) == 1.0

    @pytest.mark.parametrize("knots, values", [([2, 1], [0.5, 0.2]), ([1, 2], [0.2, 0.5]), ([0, 1], [1, 0.5]), ([1], [1.5])])
    def test_invalid_curves(self, knots, values):
        with pytest.raises(ValueError):
            StepSurvivalCurve(knots, values)


class TestQuantile:
    @pytest.mark.parametrize("beta, expected", [(0.25, 2.0), (0.5, 2.0), (0.0, 0.0), (0.75, 5.0), (1.0, 5.0)])
    def test_hand_cases(self, beta, expected):
        assert survival_quantile(CURVE, beta) == expected

    def test_empty_set_is_inf(self):
        assert survival_quantile(StepSurvivalCurve([2], [0.5]), 0.9) == math.inf

    @pytest.mark.parametrize("beta", [-0.1, 1.1, float("nan")])
    def test_beta_out_of_range(self, beta):
        with pytest.raises(ValueError):
            survival_quantile(CURVE, beta)

    @settings(max_examples=80, deadline=None)
    @given(curves(), st.lists(st.floats(0, 1), min_size=2, max_size=20))
    def test_monotone_in_beta(self, curve, betas):
        q = [survival_quantile(curve, b) for b in sorted(betas)]
        assert all(a <= b for a, b in zip(q, q[1:]))

    @settings(max_examples=80, deadline=None)
    @given(curves(), st.floats(0, 1))
    def test_round_trip(self, curve, beta):
        q = survival_quantile(curve, beta)
        if math.isfinite(q):
            assert evaluate_curve(curve, q) <= 1 - beta


class TestCumulativeHazard:
    def test_single_knot(self):
        h = curve_to_cumhaz(StepSurvivalCurve([1], [math.exp(-1)]))
        assert h(1) == pytest.approx(1.0, abs=1e-15)

    def test_two_knots(self):
        h = curve_to_cumhaz(StepSurvivalCurve([1, 2], [0.5, 0.25]))
        np.testing.assert_allclose(h.increments, [math.log(2), math.log(2)], rtol=1e-15)

    def test_constant_one(self):
        h = curve_to_cumhaz(StepSurvivalCurve([1, 3], [1.0, 1.0]))
        assert h(10) == 0.0 and h(0) == 0.0

    def test_zero_without_floor_rejected(self):
        with pytest.raises(ValueError):
            curve_to_cumhaz(CURVE)

    def test_zero_with_floor(self):
        h = curve_to_cumhaz(CURVE, floor=0.05)
        assert h(5) == pytest.approx(-math.log(0.05))

    @settings(max_examples=80, deadline=None)
    @given(curves(), st.floats(0.01, 0.5))
    def test_exp_reproduces_clamped_curve(self, curve, floor):
        h = curve_to_cumhaz(curve, floor)
        back = np.exp(-h(curve.knots))
        np.testing.assert_allclose(back, np.maximum(curve.values, floor), rtol=0, atol=1e-12)


class TestCurveBatch:
    def test_row_and_matrix_evaluation(self):
        b = CurveBatch([1, 2], [[0.8, 0.4], [0.6, 0.1]])
        np.testing.assert_array_equal(b.evaluate([0.5, 2.0]), [1.0, 0.1])
        np.testing.assert_array_equal(b.evaluate([[1, 2], [0, 1.5]]), [[0.8, 0.4], [1.0, 0.6]])
        np.testing.assert_array_equal(b.evaluate([0.5, 1, 3]), [[1.0, 0.8, 0.4], [1.0, 0.6, 0.1]])

    def test_quantiles_match_scalar(self, rng):
        for _ in range(30):
            c = random_curve(rng)
            b = CurveBatch(c.knots, c.values[None, :])
            betas = np.linspace(0, 1, 21)
            q, s = b.quantiles(betas)
            for j, beta in enumerate(betas):
                assert q[0, j] == survival_quantile(c, beta)
                if math.isfinite(q[0, j]):
                    assert s[0, j] == evaluate_curve(c, q[0, j])
                else:
                    assert s[0, j] == c.floor

    def test_forward_fill(self):
        np.testing.assert_array_equal(forward_fill_onto([1, 3], [0.5, 0.2], [0.5, 1, 2, 3, 4]), [[1, 0.5, 0.5, 0.2, 0.2]])


class TestRecords:
    def test_full_to_observed(self):
        o = FullRecord((1.0,), 2.0, 3.0).observed()
        assert o == ObservedRecord((1.0,), 2.0, True)
        o = FullRecord((1.0,), 4.0, 3.0).observed()
        assert o == ObservedRecord((1.0,), 3.0, False)

    @pytest.mark.parametrize("t", [0.0, -1.0, math.inf, math.nan])
    def test_invalid_time(self, t):
        with pytest.raises(ValueError):
            ObservedRecord((0.0,), t, True)

    def test_dataset_roundtrip_records(self):
        d = Dataset([[1.0, 2.0], [3.0, 4.0]], [1.5, 2.5], [1, 0])
        assert Dataset.from_records(d.records).records == d.records
        assert d.flipped().event.tolist() == [False, True]

    def test_dataset_is_immutable(self):
        d = Dataset([[1.0]], [1.0], [1])
        with pytest.raises(ValueError):
            d.time[0] = 2.0

    def test_inconsistent_dimension(self):
        with pytest.raises(ValueError):
            Dataset.from_records([ObservedRecord((1.0,), 1.0, True), ObservedRecord((1.0, 2.0), 1.0, True)])


class TestSplit:
    def test_sizes(self):
        s = split_dataset(10, 0.5, 7)
        assert len(s.train) == len(s.calib) == 5

    def test_rounding_rule(self):
        s = split_dataset(3, 0.5, 1)
        assert len(s.calib) == 1 and len(s.train) == 2

    def test_deterministic(self):
        a, b = split_dataset(50, 0.3, 9), split_dataset(50, 0.3, 9)
        np.testing.assert_array_equal(a.train, b.train)
        np.testing.assert_array_equal(a.calib, b.calib)

    @pytest.mark.parametrize("n, frac", [(1, 0.5), (10, 0.0), (10, 1.0), (3, 0.2)])
    def test_degenerate(self, n, frac):
        with pytest.raises(ValueError):
            split_dataset(n, frac, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2**31))
    def test_partition(self, n, frac, seed):
        if math.floor(n * frac) in (0, n):
            return
        s = split_dataset(n, frac, seed)
        both = np.concatenate([s.train, s.calib])
        assert np.array_equal(np.sort(both), np.arange(n))


class TestCsv:
    def test_dataset_roundtrip(self, tmp_path):
        d = Dataset([[0.1, -2.0], [3.0, 4.5]], [1.25, 0.3], [1, 0])
        p = tmp_path / "d.csv"
        write_dataset_csv(d, p)
        assert p.read_text().splitlines()[0] == "x1,x2,time,event"
        back = read_dataset_csv(p)
        np.testing.assert_array_equal(back.X, d.X)
        np.testing.assert_array_equal(back.time, d.time)
        np.testing.assert_array_equal(back.event, d.event)

    def test_full_roundtrip(self, tmp_path):
        f = FullData(np.array([[1.0], [2.0]]), np.array([1.0, 5.0]), np.array([2.0, 3.0]))
        p = tmp_path / "f.csv"
        write_full_csv(f, p)
        back = read_full_csv(p)
        np.testing.assert_array_equal(back.event_time, f.event_time)
        np.testing.assert_array_equal(back.censor_time, f.censor_time)

    @pytest.mark.parametrize("body, msg", [
        ("x1,time,event\n1,2,3\n", "event must be 0 or 1"),
        ("x1,time,event\n1,-2,1\n", "positive"),
        ("x2,time,event\n1,2,1\n", "x1..xd"),
        ("x1,time\n1,2\n", "must end with"),
        ("x1,time,event\n1,2\n", ":2: expected 3 fields"),
    ])
    def test_bad_files(self, tmp_path, body, msg):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(ValueError, match=msg):
            read_dataset_csv(p)
