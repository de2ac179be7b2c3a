"""Seeded generators for the three synthetic censoring benchmarks.

Setting 1: two standard-normal covariates, exponential event times with rate
``exp(-x1 + x2)``, independent exponential censoring with rate 1/3.
Settings 2 and 3: 100 uniform covariates on [-1, 1], log-normal event and
censoring times whose log-location switches between log 10 and log 1000 on
covariate regions.

Exponential laws use the rate parameterization; log-normal laws have
log-scale standard deviation 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import FullData

LOG10 = math.log(10.0)
LOG1000 = math.log(1000.0)


@dataclass(frozen=True)
class SettingSpec:
    id: int
    d: int
    description: str


SETTINGS = {
    1: SettingSpec(1, 2, "X~N(0,1)^2; T|X~Exp(rate exp(-X1+X2)); C~Exp(rate 1/3)"),
    2: SettingSpec(2, 100, "X~U[-1,1]^100; T|X lognormal, region {X2<0,X3>0,X4>0}; C|X lognormal on X1<0"),
    3: SettingSpec(3, 100, "X~U[-1,1]^100; T|X lognormal, region {X1..5>0,X6..10<0}; C|X lognormal on {X1>0,X2<0}"),
}


def get_setting(setting) -> SettingSpec:
    sid = setting.id if isinstance(setting, SettingSpec) else int(setting)
    try:
        return SETTINGS[sid]
    except KeyError:
        raise ValueError(f"unknown setting id {sid!r}; known: {sorted(SETTINGS)}") from None


def replication_seed(master_seed: int, replication: int) -> np.random.SeedSequence:
    """Independent stream for replication ``r``, identical however reps are scheduled."""
    return np.random.SeedSequence([int(master_seed), int(replication)])


# ---------------------------------------------------------------------------
# true conditional laws


def event_rate(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.exp(-X[:, 0] + X[:, 1])


CENSOR_RATE_1 = 1.0 / 3.0


def event_logmean(setting: int, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if setting == 2:
        region = (X[:, 1] < 0) & (X[:, 2] > 0) & (X[:, 3] > 0)
    elif setting == 3:
        region = np.all(X[:, :5] > 0, axis=1) & np.all(X[:, 5:10] < 0, axis=1)
    else:
        raise ValueError(f"setting {setting} has no log-normal event law")
    return np.where(region, LOG10, LOG1000)


def censor_logmean(setting: int, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if setting == 2:
        region = X[:, 0] < 0
    elif setting == 3:
        region = (X[:, 0] > 0) & (X[:, 1] < 0)
    else:
        raise ValueError(f"setting {setting} has no log-normal censoring law")
    return np.where(region, LOG10, LOG1000)


class _AnalyticModel:
    """Closed-form conditional survival law exposing the fitted-model interface."""

    def survival(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        t = np.asarray(t, dtype=float)
        n = X.shape[0]
        if t.ndim == 0:
            t = np.full(n, float(t))
        if t.ndim == 1 and t.shape[0] != n:
            t = np.broadcast_to(t, (n, t.shape[0]))
        return self._survival(X, t)

    def quantiles(self, X, betas):
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        q = self._quantile(np.asarray(X, dtype=float), betas)
        q = np.where(betas[None, :] <= 0, 0.0, q)
        s = self.survival(X, q)
        return q, s

    def predict_curve(self, x):
        raise NotImplementedError("analytic laws are continuous; no step curve")


class ExponentialLaw(_AnalyticModel):
    """``S(t|x) = exp(-rate(x) t)``."""

    def __init__(self, rate_fn):
        self.rate_fn = rate_fn

    def _rate(self, X):
        return np.broadcast_to(np.asarray(self.rate_fn(X), dtype=float), (X.shape[0],))

    def _survival(self, X, t):
        lam = self._rate(X)
        lam = lam[:, None] if t.ndim == 2 else lam
        return np.exp(-lam * t)

    def _quantile(self, X, betas):
        lam = self._rate(X)
        with np.errstate(divide="ignore"):
            return -np.log1p(-betas)[None, :] / lam[:, None]


class LogNormalLaw(_AnalyticModel):
    """Log-normal with covariate-dependent log-location and unit log-scale."""

    def __init__(self, logmean_fn):
        self.logmean_fn = logmean_fn

    def _survival(self, X, t):
        mu = self.logmean_fn(X)
        mu = mu[:, None] if t.ndim == 2 else mu
        with np.errstate(divide="ignore"):
            return ndtr(mu - np.log(t))

    def _quantile(self, X, betas):
        mu = self.logmean_fn(X)
        return np.exp(mu[:, None] + ndtri(betas)[None, :])


def true_event_model(setting) -> _AnalyticModel:
    sid = get_setting(setting).id
    if sid == 1:
        return ExponentialLaw(event_rate)
    return LogNormalLaw(lambda X: event_logmean(sid, X))


def true_censor_model(setting) -> _AnalyticModel:
    sid = get_setting(setting).id
    if sid == 1:
        return ExponentialLaw(lambda X: np.full(np.asarray(X).shape[0], CENSOR_RATE_1))
    return LogNormalLaw(lambda X: censor_logmean(sid, X))


def oracle_quantile(setting, beta: float, x) -> float:
    """True conditional ``beta``-quantile of the event time at covariate ``x``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    sid = get_setting(setting).id
    if sid == 1:
        return float(-math.log1p(-beta) / event_rate(x)[0])
    return float(math.exp(event_logmean(sid, x)[0] + ndtri(beta)))


# ---------------------------------------------------------------------------
# sampling


def generate(setting, n: int, seed) -> FullData:
    """Draw ``n`` i.i.d. full records (covariates, event time, censoring time)."""
    spec = get_setting(setting)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if spec.id == 1:
        X = rng.standard_normal((n, spec.d))
        T = rng.exponential(1.0 / event_rate(X))
        C = rng.exponential(1.0 / CENSOR_RATE_1, size=n)
    else:
        X = rng.uniform(-1.0, 1.0, size=(n, spec.d))
        T = np.exp(event_logmean(spec.id, X) + rng.standard_normal(n))
        C = np.exp(censor_logmean(spec.id, X) + rng.standard_normal(n))
    return FullData(X, T, C)
