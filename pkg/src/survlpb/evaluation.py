"""Coverage metrics for lower predictive bounds on held-out data.

With full synthetic data the oracle metric counts ``T_i >= L(X_i)`` directly.
On censored data coverage is estimated by IPCW (Hajek ratio), by an augmented
one-step correction of it, or by plugging the outcome model in (OR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import augmentation_weights, censoring_times, ipcw_weights
from .core import DEFAULT_POSITIVITY_FLOOR, Dataset, FullData


@dataclass(frozen=True)
class CoverageReport:
    method: str
    estimator: str
    metric: str  # oracle | IPCW | AIPCW | OR
    coverage: float
    n_test: int
    mean_lpb: float
    median_lpb: float


def _lpb_values(lpb, X) -> np.ndarray:
    if hasattr(lpb, "predict"):
        return np.asarray(lpb.predict(X), dtype=float)
    vals = np.asarray(lpb, dtype=float)
    if vals.ndim == 0:
        vals = np.full(np.asarray(X).shape[0], float(vals))
    return vals


def oracle_coverage(test_full: FullData, lpb) -> float:
    """Fraction of test subjects whose event time is at least their bound.

    An infinite bound never covers.
    """
    if test_full.n == 0:
        raise ValueError("empty test set")
    L = _lpb_values(lpb, test_full.X)
    return float(np.mean(test_full.event_time >= L))


def ipcw_coverage_metric(test: Dataset, lpb, censor_model, floor: float = DEFAULT_POSITIVITY_FLOOR) -> float:
    """Hajek-weighted share of observed failures at or above their bound; NaN for 0/0."""
    w = ipcw_weights(test, censor_model, floor)
    den = w.sum()
    if den == 0:
        return math.nan
    hit = test.time >= _lpb_values(lpb, test.X)
    return float(np.sum(w[hit]) / den)


def or_coverage_metric(test: Dataset, survival_model, lpb) -> float:
    """Mean model-predicted survival at each subject's bound."""
    L = _lpb_values(lpb, test.X)
    return float(np.mean(survival_model.survival(test.X, L)))


def aipcw_coverage_metric(
    test: Dataset,
    lpb,
    censor_model,
    survival_model,
    floor: float = DEFAULT_POSITIVITY_FLOOR,
    chunk_size: int = 512,
    eta=None,
) -> float:
    """Hajek IPCW coverage plus a one-step augmentation correction.

    The augmentation integrand ``eta - p`` is centered at the Hajek estimate
    ``p`` and the sum is normalized by the total inverse weight, i.e. one
    Newton step on the augmented estimating equation for coverage started at
    ``p``.  Censoring times are those of the test set.

    ``eta(X, L, u)`` may override the conditional coverage given survival
    past each ``u``; it must return shape (len(X), len(u)).  By default it is
    ``S_T(max(L, u)) / S_T(u)`` from ``survival_model``.
    """
    L = _lpb_values(lpb, test.X)
    w_ipcw = ipcw_weights(test, censor_model, floor)
    den = w_ipcw.sum()
    if den == 0:
        return math.nan
    p = float(np.sum(w_ipcw[test.time >= L]) / den)
    u = censoring_times(test)
    if u.size == 0:
        return p
    order = np.argsort(test.time, kind="stable")
    resid = 0.0
    for lo in range(0, test.n, chunk_size):
        rows = order[lo: lo + chunk_size]
        Y = test.time[rows]
        # beyond the first censoring time >= max(Y) the martingale is constant
        q_cols = min(u.size, int(np.searchsorted(u, Y.max(), side="left")) + 1)
        uc = u[:q_cols]
        X = test.X[rows]
        w = augmentation_weights(X, Y, test.event[rows], uc, censor_model, floor)
        if eta is None:
            s_u = np.maximum(survival_model.survival(X, np.broadcast_to(uc, (rows.size, q_cols))), floor)
            s_l = survival_model.survival(X, L[rows])
            e = np.where(L[rows][:, None] <= uc[None, :], 1.0, s_l[:, None] / s_u)
        else:
            e = np.asarray(eta(X, L[rows], uc), dtype=float)
        resid += float(np.sum((e - p) * w))
    return p + resid / den


def lpb_summary(lpb_values) -> dict:
    """Order statistics of the finite bounds and a count of infinite ones."""
    L = np.asarray(lpb_values, dtype=float)
    finite = L[np.isfinite(L)]
    out = {"n_finite": int(finite.size), "n_sentinel": int(L.size - finite.size)}
    if finite.size:
        q25, med, q75 = np.quantile(finite, [0.25, 0.5, 0.75])
        out.update(mean=float(finite.mean()), median=float(med), q25=float(q25), q75=float(q75))
    else:
        out.update(mean=math.nan, median=math.nan, q25=math.nan, q75=math.nan)
    return out
