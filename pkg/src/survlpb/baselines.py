"""Naive comparison bounds: linear quantile regression and one-sided split CQR.

``QR_Y``/``CQR_Y`` regress the observed follow-up time; ``QR_T``/``CQR_T`` use
the uncensored records only.  None of them model the censoring mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import Dataset, SplitIndices

BASELINE_METHODS = ("QR_Y", "CQR_Y", "QR_T", "CQR_T")


def pinball_loss(residuals, tau: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.mean(r * (tau - (r < 0))))


@dataclass(frozen=True)
class LinearQuantileModel:
    tau: float
    intercept: float
    coefficients: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.coefficients.size)
        return self.intercept + X @ self.coefficients


def pinball_qr_fit(X, y, tau: float) -> LinearQuantileModel:
    """Linear ``tau``-quantile regression solved exactly as a linear program.

    Minimizes the mean pinball loss with the standard split of residuals into
    positive and negative parts, using the HiGHS solver.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(y.size, -1)
    n, d = X.shape
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if n <= d + 1:
        raise ValueError(f"need more than d + 1 = {d + 1} observations, got {n}")
    Z = sparse.hstack([sparse.csr_matrix(np.column_stack([np.ones(n), X])), sparse.identity(n), -sparse.identity(n)])
    # coefficients are free; residual parts are nonnegative
    bounds = [(None, None)] * (d + 1) + [(0, None)] * (2 * n)
    cost = np.concatenate([np.zeros(d + 1), np.full(n, tau / n), np.full(n, (1 - tau) / n)])
    res = linprog(cost, A_eq=Z.tocsr(), b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"quantile regression failed: {res.message}")
    b = res.x[: d + 1]
    return LinearQuantileModel(tau, float(b[0]), b[1:].copy())


def conformal_correction(scores, alpha: float) -> float:
    """The ``ceil((1 - alpha)(m + 1))``-th smallest score; +inf if that rank exceeds m."""
    s = np.sort(np.asarray(scores, dtype=float))
    m = s.size
    rank = math.ceil((1.0 - alpha) * (m + 1) - 1e-9)
    if rank > m or m == 0:
        return math.inf
    return float(s[rank - 1])


@dataclass(frozen=True)
class BaselineLPB:
    method: str
    model: LinearQuantileModel
    correction: float = 0.0

    def predict(self, X) -> np.ndarray:
        # bounds are clamped at 0: event times are positive
        return np.maximum(self.model.predict(X) - self.correction, 0.0)


def make_baseline_lpb(
    data: Dataset,
    method: str,
    alpha: float,
    split: SplitIndices,
) -> BaselineLPB:
    """Fit one of ``QR_Y``, ``CQR_Y``, ``QR_T``, ``CQR_T``.

    Quantile regressions are fitted on the training split; the CQR variants
    take the conformal correction from one-sided scores ``q(X_i) - y_i`` on
    the calibration split.
    """
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline {method!r}")
    train = data.subset(split.train)
    calib = data.subset(split.calib)
    if method.endswith("_T"):
        train = train.subset(np.nonzero(train.event)[0])
        calib = calib.subset(np.nonzero(calib.event)[0])
        if train.n == 0:
            raise ValueError(f"{method} needs at least one uncensored record")
    model = pinball_qr_fit(train.X, train.time, alpha)
    if method.startswith("QR"):
        return BaselineLPB(method, model)
    scores = model.predict(calib.X) - calib.time
    return BaselineLPB(method, model, conformal_correction(scores, alpha))
