"""Conditional survival estimators for T|X and C|X.

Every fitted model maps covariates to step survival curves.  ``predict_curves``
is the batched form used by the calibrators; ``predict_curve`` returns a single
:class:`~survlpb.core.StepSurvivalCurve`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import CumulativeHazard, CurveBatch, Dataset, StepSurvivalCurve


class TargetKind(enum.Enum):
    EventTime = "event"
    CensoringTime = "censoring"


def _indicator(data: Dataset, target: TargetKind) -> np.ndarray:
    if target is TargetKind.EventTime:
        return data.event
    if target is TargetKind.CensoringTime:
        return ~data.event
    raise ValueError(f"unknown target {target!r}")


class ConvergenceError(RuntimeError):
    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class SurvivalModel:
    """Base for fitted conditional survival models.

    Subclasses implement :meth:`predict_curves`; the remaining methods derive
    from it.
    """

    def predict_curves(self, X) -> CurveBatch:
        raise NotImplementedError

    def predict_curve(self, x) -> StepSurvivalCurve:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return self.predict_curves(x)[0]

    def survival(self, X, t) -> np.ndarray:
        return self.predict_curves(X).evaluate(t)

    def quantiles(self, X, betas) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_curves(X).quantiles(betas)


# ---------------------------------------------------------------------------
# Kaplan-Meier


def product_limit(time, indicator):
    """Distinct indicator-event times and the product-limit survival at each."""
    time = np.asarray(time, dtype=float)
    indicator = np.asarray(indicator, dtype=bool)
    knots = np.unique(time[indicator])
    if knots.size == 0:
        return knots, np.empty(0)
    sorted_t = np.sort(time)
    at_risk = (time.size - np.searchsorted(sorted_t, knots, side="left")).astype(float)
    ev_sorted = np.sort(time[indicator])
    deaths = np.searchsorted(ev_sorted, knots, side="right") - np.searchsorted(ev_sorted, knots, side="left")
    values = np.cumprod(1.0 - deaths / at_risk)
    return knots, values


@dataclass(eq=False)
class KaplanMeierModel(SurvivalModel):
    """Covariate-free product-limit curve."""

    curve: StepSurvivalCurve
    n_features_: int = 0

    def predict_curves(self, X) -> CurveBatch:
        X = np.asarray(X, dtype=float)
        n = X.reshape(-1, self.n_features_).shape[0] if self.n_features_ else len(X)
        values = np.broadcast_to(self.curve.values, (n, self.curve.knots.size))
        return CurveBatch(self.curve.knots, values)

    def predict_curve(self, x) -> StepSurvivalCurve:
        return self.curve

    def __eq__(self, other):
        return isinstance(other, KaplanMeierModel) and self.curve == other.curve


def km_fit(data: Dataset, target: TargetKind = TargetKind.EventTime) -> KaplanMeierModel:
    """Product-limit estimate on ``(Y, Delta)`` or ``(Y, 1 - Delta)``.

    No relevant events gives the constant-1 curve; a censored last
    observation leaves a flat tail at the last value.
    """
    if data.n == 0:
        raise ValueError("cannot fit Kaplan-Meier on an empty dataset")
    knots, values = product_limit(data.time, _indicator(data, target))
    return KaplanMeierModel(StepSurvivalCurve(knots, values), n_features_=data.d)


# ---------------------------------------------------------------------------
# Cox proportional hazards


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 40


@dataclass(eq=False)
class CoxModel(SurvivalModel):
    """Cox model ``S(t|x) = exp(-L0(t) exp((x - mean) . coef))``."""

    coefficients: np.ndarray
    baseline_cumhaz: CumulativeHazard
    covariate_means: np.ndarray
    loglik_history: list = field(default_factory=list)
    grad_norm: float = 0.0

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.coefficients.size)
        return (X - self.covariate_means) @ self.coefficients

    def predict_curves(self, X) -> CurveBatch:
        risk = np.exp(self.linear_predictor(X))
        cum = self.baseline_cumhaz.cumulative
        return CurveBatch(self.baseline_cumhaz.knots, np.exp(-np.outer(risk, cum)))

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "covariate_means": self.covariate_means.tolist(),
            "baseline_knots": self.baseline_cumhaz.knots.tolist(),
            "baseline_increments": self.baseline_cumhaz.increments.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CoxModel":
        doc = json.loads(text)
        return cls(
            np.array(doc["coefficients"], dtype=float),
            CumulativeHazard(doc["baseline_knots"], doc["baseline_increments"]),
            np.array(doc["covariate_means"], dtype=float),
        )

    def __eq__(self, other):
        return (
            isinstance(other, CoxModel)
            and np.array_equal(self.coefficients, other.coefficients)
            and np.array_equal(self.covariate_means, other.covariate_means)
            and np.array_equal(self.baseline_cumhaz.knots, other.baseline_cumhaz.knots)
            and np.array_equal(self.baseline_cumhaz.increments, other.baseline_cumhaz.increments)
        )


class _BreslowPartialLikelihood:
    """Breslow-ties partial likelihood with its gradient and information."""

    def __init__(self, Xc, time, indicator):
        order = np.argsort(time, kind="stable")
        self.X = Xc[order]
        t = time[order]
        ev = indicator[order]
        self.knots, self.deaths = np.unique(t[ev], return_counts=True)
        self.start = np.searchsorted(t, self.knots, side="left")
        # covariate sums over the events at each distinct time
        group = np.searchsorted(self.knots, t[ev])
        self.event_xsum = np.zeros((self.knots.size, Xc.shape[1]))
        np.add.at(self.event_xsum, group, self.X[ev])
        # for subject j: number of knots t_k <= Y_j
        self.n_knots_before = np.searchsorted(self.knots, t, side="right")

    def evaluate(self, beta, derivatives=True):
        lp = self.X @ beta
        shift = lp.max()
        w = np.exp(lp - shift)
        rc0 = np.cumsum(w[::-1])[::-1]
        s0 = rc0[self.start]
        d = self.deaths
        loglik = float(np.sum(self.event_xsum @ beta) - np.sum(d * (np.log(s0) + shift)))
        if not derivatives:
            return loglik, None, None
        rc1 = np.cumsum((w[:, None] * self.X)[::-1], axis=0)[::-1]
        a = rc1[self.start] / s0[:, None]
        grad = self.event_xsum.sum(axis=0) - d @ a
        c = np.concatenate([[0.0], np.cumsum(d / s0)])[self.n_knots_before]
        info = (self.X * (w * c)[:, None]).T @ self.X - (a * d[:, None]).T @ a
        return loglik, grad, info

    def breslow_increments(self, beta):
        w = np.exp(self.X @ beta)
        rc0 = np.cumsum(w[::-1])[::-1]
        return self.deaths / rc0[self.start]


def cox_fit(
    data: Dataset,
    target: TargetKind = TargetKind.EventTime,
    newton_config: NewtonConfig | None = None,
) -> CoxModel:
    """Maximize the Breslow partial likelihood by damped Newton steps.

    Convergence is judged on the gradient of the log partial likelihood
    divided by the number of subjects, so ``tol`` does not scale with n.

    Raises
    ------
    ValueError
        No relevant events, or a constant covariate column.
    ConvergenceError
        Singular information matrix, or gradient norm above ``tol`` after
        ``max_iter`` steps.
    """
    cfg = newton_config or NewtonConfig()
    ind = _indicator(data, target)
    if not ind.any():
        raise ValueError("Cox fit needs at least one relevant event")
    X = data.X
    if X.shape[1] == 0:
        raise ValueError("Cox fit needs at least one covariate")
    means = X.mean(axis=0)
    if np.any(np.ptp(X, axis=0) == 0):
        raise ValueError("covariate columns must not be constant")
    pl = _BreslowPartialLikelihood(X - means, data.time, ind)
    beta = np.zeros(X.shape[1])
    loglik, grad, info = pl.evaluate(beta)
    history = [loglik]
    gnorm = float(np.linalg.norm(grad)) / data.n
    for _ in range(cfg.max_iter):
        if gnorm <= cfg.tol:
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information matrix", gnorm) from None
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("singular information matrix", gnorm)
        scale = 1.0
        for _ in range(cfg.max_halvings):
            cand = beta + scale * step
            cand_ll, _, _ = pl.evaluate(cand, derivatives=False)
            # rounding slack: near the optimum the likelihood is flat to machine precision
            if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-13 * abs(loglik):
                break
            scale *= 0.5
        else:
            # no ascent possible along the Newton direction: at numerical optimum
            break
        beta = cand
        loglik, grad, info = pl.evaluate(beta)
        history.append(loglik)
        gnorm = float(np.linalg.norm(grad)) / data.n
    if gnorm > cfg.tol:
        raise ConvergenceError(
            f"Cox fit did not converge: gradient norm {gnorm:.3e} > {cfg.tol:.1e}", gnorm
        )
    baseline = CumulativeHazard(pl.knots, pl.breslow_increments(beta))
    return CoxModel(beta, baseline, means, loglik_history=history, grad_norm=gnorm)


# ---------------------------------------------------------------------------
# k-nearest-neighbour Kaplan-Meier


def default_k(n: int) -> int:
    return min(n, max(50, math.ceil(0.2 * n)))


@dataclass(eq=False)
class KNNKaplanMeierModel(SurvivalModel):
    """Kaplan-Meier on the k training records nearest to the query point.

    Distances are Euclidean on covariates standardized with the training
    means and standard deviations; equal distances are broken by record index.
    """

    train: Dataset
    target: TargetKind
    k: int
    chunk_size: int = 2048

    def __post_init__(self):
        X = self.train.X
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        self.Z_ = (X - self.mean_) / self.scale_
        self.indicator_ = _indicator(self.train, self.target)
        self.knots_ = np.unique(self.train.time[self.indicator_])
        t = self.train.time
        self.event_at_ = (t[:, None] == self.knots_[None, :]) & self.indicator_[:, None]
        self.at_risk_ = t[:, None] >= self.knots_[None, :]

    def neighbors(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float).reshape(-1, self.Z_.shape[1]) - self.mean_) / self.scale_
        d2 = (
            np.sum(Z * Z, axis=1)[:, None]
            - 2.0 * Z @ self.Z_.T
            + np.sum(self.Z_ * self.Z_, axis=1)[None, :]
        )
        # round away dot-product noise so exact duplicates tie and fall back to index order
        d2 = np.round(np.maximum(d2, 0.0), 10)
        return np.argsort(d2, axis=1, kind="stable")[:, : self.k]

    def predict_curve(self, x) -> StepSurvivalCurve:
        nb = np.sort(self.neighbors(x)[0])
        return km_fit(self.train.subset(nb), self.target).curve

    def predict_curves(self, X) -> CurveBatch:
        X = np.asarray(X, dtype=float).reshape(-1, self.Z_.shape[1])
        n_train = self.train.n
        out = np.empty((X.shape[0], self.knots_.size))
        E = self.event_at_.astype(float)
        R = self.at_risk_.astype(float)
        for lo in range(0, X.shape[0], self.chunk_size):
            nb = self.neighbors(X[lo: lo + self.chunk_size])
            member = np.zeros((nb.shape[0], n_train))
            np.put_along_axis(member, nb, 1.0, axis=1)
            deaths = member @ E
            at_risk = member @ R
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = np.where(deaths > 0, deaths / at_risk, 0.0)
            out[lo: lo + nb.shape[0]] = np.cumprod(1.0 - frac, axis=1)
        return CurveBatch(self.knots_, out)


def knn_km_fit(data: Dataset, target: TargetKind = TargetKind.EventTime, k: int | None = None) -> KNNKaplanMeierModel:
    if data.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    k = default_k(data.n) if k is None else int(k)
    if k < 1 or k > data.n:
        raise ValueError(f"k must lie in [1, n={data.n}], got {k}")
    return KNNKaplanMeierModel(data, target, k)


ESTIMATORS = {
    "km": lambda data, target: km_fit(data, target),
    "cox": lambda data, target: cox_fit(data, target),
    "knn_km": lambda data, target: knn_km_fit(data, target),
}


def fit_estimator(name: str, data: Dataset, target: TargetKind) -> SurvivalModel:
    try:
        fit = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return fit(data, target)
