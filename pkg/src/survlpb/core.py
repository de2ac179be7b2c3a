"""Foundational types: observed/full records, datasets, step survival curves.

A :class:`StepSurvivalCurve` is right-continuous and nonincreasing, equal to 1
before its first knot.  :class:`CurveBatch` holds many curves that share one
knot vector, which is how fitted models hand curves to the calibrators.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_POSITIVITY_FLOOR = 1.0 / 20.0


@dataclass(frozen=True)
class ObservedRecord:
    covariates: tuple[float, ...]
    time: float
    event: bool

    def __post_init__(self):
        if not (self.time > 0 and math.isfinite(self.time)):
            raise ValueError(f"time must be positive and finite, got {self.time!r}")


@dataclass(frozen=True)
class FullRecord:
    covariates: tuple[float, ...]
    event_time: float
    censor_time: float

    def observed(self) -> ObservedRecord:
        return ObservedRecord(
            self.covariates,
            min(self.event_time, self.censor_time),
            self.event_time <= self.censor_time,
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Right-censored sample stored column-wise.

    Parameters
    ----------
    X : array of shape (n, d)
    time : array of shape (n,)
        Follow-up times ``Y = min(T, C)``.
    event : bool array of shape (n,)
        ``Delta = 1{T <= C}``.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        time = np.array(self.time, dtype=float).reshape(-1)
        event = np.array(self.event).astype(bool).reshape(-1)
        if X.shape[0] != time.shape[0] and X.size == 0:
            X = np.zeros((time.shape[0], 0))
        if not (X.shape[0] == time.shape[0] == event.shape[0]):
            raise ValueError("X, time and event must have the same number of rows")
        if np.any(~np.isfinite(time)) or np.any(time <= 0):
            raise ValueError("all times must be positive and finite")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "time", _readonly(time))
        object.__setattr__(self, "event", _readonly(event))

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    @property
    def records(self) -> list[ObservedRecord]:
        return [
            ObservedRecord(tuple(x), float(t), bool(e))
            for x, t, e in zip(self.X.tolist(), self.time, self.event)
        ]

    @classmethod
    def from_records(cls, records: Sequence[ObservedRecord]) -> "Dataset":
        if not records:
            raise ValueError("empty record list")
        d = len(records[0].covariates)
        if any(len(r.covariates) != d for r in records):
            raise ValueError("records have inconsistent covariate dimension")
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), d)
        return cls(X, [r.time for r in records], [r.event for r in records])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.time[idx], self.event[idx])

    def flipped(self) -> "Dataset":
        """Same sample with the event indicator negated (censoring as the event)."""
        return Dataset(self.X, self.time, ~self.event)


@dataclass(frozen=True, eq=False)
class FullData:
    """Synthetic sample with both latent times retained."""

    X: np.ndarray
    event_time: np.ndarray
    censor_time: np.ndarray

    def __post_init__(self):
        for name in ("X", "event_time", "censor_time"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))

    @property
    def n(self) -> int:
        return self.event_time.shape[0]

    def __len__(self) -> int:
        return self.n

    def observed(self) -> Dataset:
        return Dataset(
            self.X,
            np.minimum(self.event_time, self.censor_time),
            self.event_time <= self.censor_time,
        )

    def subset(self, idx) -> "FullData":
        idx = np.asarray(idx)
        return FullData(self.X[idx], self.event_time[idx], self.censor_time[idx])

    @property
    def records(self) -> list[FullRecord]:
        return [
            FullRecord(tuple(x), float(t), float(c))
            for x, t, c in zip(self.X.tolist(), self.event_time, self.censor_time)
        ]


# ---------------------------------------------------------------------------
# step curves


@dataclass(frozen=True, eq=False)
class StepSurvivalCurve:
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if knots.shape != values.shape:
            raise ValueError("knots and values must have equal length")
        if knots.size:
            if knots[0] <= 0 or np.any(np.diff(knots) <= 0):
                raise ValueError("knots must be strictly increasing and positive")
            if np.any(values < 0) or np.any(values > 1):
                raise ValueError("curve values must lie in [0, 1]")
            if np.any(np.diff(values) > 0):
                raise ValueError("curve values must be nonincreasing")
        object.__setattr__(self, "knots", _readonly(knots))
        object.__setattr__(self, "values", _readonly(values))

    def __call__(self, t):
        return evaluate_curve(self, t)

    @property
    def floor(self) -> float:
        """Value on the flat tail past the last knot."""
        return float(self.values[-1]) if self.values.size else 1.0

    def __eq__(self, other):
        if not isinstance(other, StepSurvivalCurve):
            return NotImplemented
        return np.array_equal(self.knots, other.knots) and np.array_equal(self.values, other.values)


def evaluate_curve(curve: StepSurvivalCurve, t):
    """Right-continuous evaluation: value at the largest knot <= t, else 1."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    idx = np.searchsorted(curve.knots, t_arr, side="right") - 1
    out = np.where(idx >= 0, curve.values[np.maximum(idx, 0)] if curve.knots.size else 1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _check_beta(beta):
    b = np.asarray(beta, dtype=float)
    if np.any(b < 0) or np.any(b > 1) or np.any(np.isnan(b)):
        raise ValueError("beta must lie in [0, 1]")
    return b


def survival_quantile(curve: StepSurvivalCurve, beta: float) -> float:
    """``inf{t >= 0 : S(t) <= 1 - beta}``; ``math.inf`` when the set is empty."""
    beta = float(_check_beta(beta))
    thr = 1.0 - beta
    if thr >= 1.0:
        return 0.0
    k = np.searchsorted(-curve.values, -thr, side="left")
    if k >= curve.knots.size:
        return math.inf
    return float(curve.knots[k])


@dataclass(frozen=True, eq=False)
class CumulativeHazard:
    knots: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        inc = np.asarray(self.increments, dtype=float).reshape(-1)
        if knots.shape != inc.shape:
            raise ValueError("knots and increments must have equal length")
        if np.any(inc < 0):
            raise ValueError("hazard increments must be nonnegative")
        if knots.size and (knots[0] <= 0 or np.any(np.diff(knots) <= 0)):
            raise ValueError("knots must be strictly increasing and positive")
        object.__setattr__(self, "knots", _readonly(knots))
        object.__setattr__(self, "increments", _readonly(inc))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t_arr, side="right") - 1
        cum = np.concatenate([[0.0], self.cumulative])
        out = cum[idx + 1]
        return float(out) if out.ndim == 0 else out


def curve_to_cumhaz(curve: StepSurvivalCurve, floor: float | None = None) -> CumulativeHazard:
    """Cumulative hazard ``-log S`` at each knot, optionally clamping S at ``floor``."""
    values = curve.values
    if floor is not None:
        values = np.maximum(values, floor)
    elif np.any(values <= 0):
        raise ValueError("curve reaches zero; supply a positivity floor")
    cum = -np.log(values)
    inc = np.diff(np.concatenate([[0.0], cum]))
    # clamping can make -log S flat but never decreasing; guard against -0.0 noise
    inc = np.maximum(inc, 0.0)
    return CumulativeHazard(curve.knots, inc)


class CurveBatch:
    """Survival curves for many subjects on a shared knot vector.

    ``values[i, k]`` is subject ``i``'s survival at ``knots[k]``.  Rows must be
    nonincreasing; repeated values are allowed, so curves with their own knot
    sets embed exactly after forward-filling onto the union grid.
    """

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float)
        self.values = values if values.ndim == 2 else values.reshape(-1, self.knots.size)
        if self.values.shape[1] != self.knots.size:
            raise ValueError("values must have one column per knot")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i) -> StepSurvivalCurve:
        return StepSurvivalCurve(self.knots, self.values[i])

    def evaluate(self, t) -> np.ndarray:
        """Evaluate row-wise.

        ``t`` of shape (n,) gives one time per row; shape (n, m) gives m times
        per row; shape (m,) with ``m != n`` is broadcast to every row.
        """
        t = np.asarray(t, dtype=float)
        n = self.n
        if t.ndim == 0:
            t = np.full(n, float(t))
        if t.ndim == 1 and t.shape[0] != n:
            t = np.broadcast_to(t, (n, t.shape[0]))
        idx = np.searchsorted(self.knots, t, side="right") - 1
        padded = np.concatenate([np.ones((n, 1)), self.values], axis=1)
        if t.ndim == 1:
            return padded[np.arange(n), idx + 1]
        return np.take_along_axis(padded, idx + 1, axis=1)

    def quantiles(self, betas) -> tuple[np.ndarray, np.ndarray]:
        """Quantiles ``q[i, j] = inf{t : S_i(t) <= 1 - beta_j}`` and ``S_i(q[i, j])``.

        Empty sets give ``q = inf`` with the curve's tail value as ``S(q)``.
        """
        betas = _check_beta(np.atleast_1d(betas))
        thr = 1.0 - betas
        n, m = self.values.shape
        idx = np.empty((n, betas.size), dtype=np.intp)
        neg_thr = -thr
        for i in range(n):
            idx[i] = np.searchsorted(-self.values[i], neg_thr, side="left")
        knots_ext = np.concatenate([self.knots, [math.inf]])
        tail = self.values[:, -1:] if m else np.ones((n, 1))
        vals_ext = np.concatenate([self.values, tail], axis=1)
        q = knots_ext[idx]
        s = np.take_along_axis(vals_ext, idx, axis=1)
        at_zero = thr >= 1.0
        q[:, at_zero] = 0.0
        s[:, at_zero] = 1.0
        return q, s


def forward_fill_onto(knots_from, values_from, grid) -> np.ndarray:
    """Evaluate step curve(s) given on ``knots_from`` at ``grid`` points."""
    idx = np.searchsorted(knots_from, grid, side="right") - 1
    values_from = np.atleast_2d(values_from)
    padded = np.concatenate([np.ones((values_from.shape[0], 1)), values_from], axis=1)
    return padded[:, idx + 1]


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    calib: np.ndarray


def split_dataset(n_or_data, calib_fraction: float, seed: int) -> SplitIndices:
    """Uniform random train/calibration partition; calibration gets floor(n * fraction)."""
    n = n_or_data if isinstance(n_or_data, (int, np.integer)) else len(n_or_data)
    if not 0 < calib_fraction < 1:
        raise ValueError("calib_fraction must lie strictly between 0 and 1")
    if n < 2:
        raise ValueError("need at least two records to split")
    n_calib = int(math.floor(n * calib_fraction))
    if n_calib == 0 or n_calib == n:
        raise ValueError(f"degenerate split sizes for n={n}, fraction={calib_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(np.sort(perm[n_calib:]), np.sort(perm[:n_calib]))


# ---------------------------------------------------------------------------
# CSV I/O


def _covariate_columns(header: Sequence[str], tail: Sequence[str]) -> int:
    if list(header[len(header) - len(tail):]) != list(tail):
        raise ValueError(f"header must end with {','.join(tail)}; got {','.join(header)}")
    cov = header[: len(header) - len(tail)]
    expected = [f"x{j + 1}" for j in range(len(cov))]
    if list(cov) != expected:
        raise ValueError(f"covariate columns must be x1..xd; got {','.join(cov)}")
    return len(cov)


def read_dataset_csv(path) -> Dataset:
    """Read ``x1,...,xd,time,event`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        d = _covariate_columns(header, ["time", "event"])
        X, time, event = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ValueError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                X.append([float(v) for v in row[:d]])
                t = float(row[d])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if row[d + 1] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: event must be 0 or 1, got {row[d + 1]!r}")
            if not (t > 0 and math.isfinite(t)):
                raise ValueError(f"{path}:{lineno}: time must be positive and finite")
            time.append(t)
            event.append(row[d + 1] == "1")
    if not time:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(X).reshape(len(time), d), time, event)


def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(data.d)] + ["time", "event"])
        for x, t, e in zip(data.X.tolist(), data.time.tolist(), data.event):
            w.writerow([repr(v) for v in x] + [repr(t), int(e)])


def write_full_csv(full: FullData, path) -> None:
    obs = full.observed()
    d = full.X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(d)] + ["event_time", "censor_time", "time", "event"])
        for i in range(full.n):
            w.writerow(
                [repr(v) for v in full.X[i].tolist()]
                + [repr(float(full.event_time[i])), repr(float(full.censor_time[i])),
                   repr(float(obs.time[i])), int(obs.event[i])]
            )


def read_full_csv(path) -> FullData:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = _covariate_columns(header, ["event_time", "censor_time", "time", "event"])
        rows = [r for r in reader if r]
    arr = np.array([[float(v) for v in r[: d + 2]] for r in rows]).reshape(len(rows), d + 2)
    return FullData(arr[:, :d], arr[:, d], arr[:, d + 1])
