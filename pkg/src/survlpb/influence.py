"""Influence function of the coverage moment, in direct and rearranged forms.

Direct form::

    Delta (h - (1 - alpha)) / S_C(T) + int (eta(u) - (1 - alpha)) dM_C(u) / S_C(u)

Rearranged form::

    h - (1 - alpha) - int (h - eta(u)) dM_C(u) / S_C(u)

with ``h = 1{R(X, T) >= beta}`` and ``dM_C = dN_C - 1{Y >= u} dLambda_C``.
Both need the full record (T and C) because the rearranged form uses ``h``
for censored subjects too.

For exponential censoring curves and piecewise-exponential ``eta`` the
martingale integrals are evaluated in closed form.  For step censoring curves
the finite sum over censoring times used by the AIPCW calibrator applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import augmentation_weights
from .core import DEFAULT_POSITIVITY_FLOOR


@dataclass(frozen=True)
class ExponentialCensoring:
    """``S_C(u) = exp(-rate u)``; ``rate`` may vary by subject."""

    rate: np.ndarray

    def survival(self, u):
        return np.exp(-np.asarray(self.rate) * u)


@dataclass(frozen=True)
class TwoPieceExpEta:
    """``eta(u) = a0 + a1 exp(r u)`` for ``u < cut``, ``b0 + b1 exp(s u)`` after.

    All fields are per-subject arrays (or scalars, broadcast).
    """

    cut: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    b0: np.ndarray
    b1: np.ndarray = 0.0
    s: np.ndarray = 0.0

    @classmethod
    def constant(cls, c):
        return cls(np.inf, c, 0.0, 0.0, c)

    @classmethod
    def exponential_quantile(cls, q, event_rate, shift=0.0):
        """``P(T >= max(q, u) | T >= u)`` for exponential T, plus a constant ``shift``."""
        q = np.asarray(q, dtype=float)
        lam = np.asarray(event_rate, dtype=float)
        return cls(q, shift, np.exp(-lam * q), lam, 1.0 + shift)

    def shifted(self, delta):
        return TwoPieceExpEta(self.cut, np.asarray(self.a0) + delta, self.a1, self.r,
                              np.asarray(self.b0) + delta, self.b1, self.s)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        before = self.a0 + self.a1 * np.exp(self.r * u)
        after = self.b0 + self.b1 * np.exp(self.s * u)
        return np.where(u < self.cut, before, after)

    def integral(self, rate, upper):
        """``int_0^upper eta(u) rate exp(rate u) du``."""
        upper = np.asarray(upper, dtype=float)
        mid = np.minimum(upper, self.cut)
        first = _piece(self.a0, self.a1, self.r, rate, 0.0, mid)
        second = _piece(self.b0, self.b1, self.s, rate, mid, np.maximum(upper, mid))
        return first + second


def _piece(c0, c1, r, lam, a, b):
    """``int_a^b (c0 + c1 e^{r u}) lam e^{lam u} du``."""
    c0, c1, r, lam, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (c0, c1, r, lam, a, b)))
    base = c0 * (np.exp(lam * b) - np.exp(lam * a))
    k = r + lam
    safe_k = np.where(k == 0, 1.0, k)
    expo = np.where(
        k == 0,
        c1 * lam * (b - a),
        c1 * lam * (np.exp(k * b) - np.exp(k * a)) / safe_k,
    )
    return base + np.where(c1 == 0, 0.0, expo)


def _observed(event_time, censor_time):
    T = np.asarray(event_time, dtype=float)
    C = np.asarray(censor_time, dtype=float)
    return np.minimum(T, C), T <= C


def influence_closed_form(event_time, censor_time, hit, censoring: ExponentialCensoring,
                          eta: TwoPieceExpEta, alpha: float) -> np.ndarray:
    """Direct form with exponential censoring, integrals in closed form."""
    Y, delta = _observed(event_time, censor_time)
    h = np.asarray(hit, dtype=float)
    lam = np.broadcast_to(np.asarray(censoring.rate, dtype=float), Y.shape)
    inv_s = np.exp(lam * Y)  # 1 / S_C(Y)
    ipcw = np.where(delta, (h - (1 - alpha)) * inv_s, 0.0)
    counting = np.where(delta, 0.0, (eta(Y) - (1 - alpha)) * inv_s)
    compensator = eta.integral(lam, Y) - (1 - alpha) * (inv_s - 1.0)
    return ipcw + counting - compensator


def influence_rearranged_closed_form(event_time, censor_time, hit, censoring: ExponentialCensoring,
                                eta: TwoPieceExpEta, alpha: float) -> np.ndarray:
    """Rearranged form with exponential censoring, integrals in closed form."""
    Y, delta = _observed(event_time, censor_time)
    h = np.asarray(hit, dtype=float)
    lam = np.broadcast_to(np.asarray(censoring.rate, dtype=float), Y.shape)
    inv_s = np.exp(lam * Y)
    counting = np.where(delta, 0.0, (h - eta(Y)) * inv_s)
    compensator = h * (inv_s - 1.0) - eta.integral(lam, Y)
    return h - (1 - alpha) - (counting - compensator)


def influence_finite_sum(X, event_time, censor_time, hit, censor_model, eta_values, censor_times,
                         alpha: float, floor: float = DEFAULT_POSITIVITY_FLOOR):
    """Both forms for step censoring curves, as finite sums over ``censor_times``.

    ``eta_values[i, k]`` is ``eta(u_k)`` for subject i.  Returns
    ``(direct, rearranged)``.  With a discrete ``log S_C`` compensator the two
    forms need not coincide exactly.
    """
    Y, delta = _observed(event_time, censor_time)
    h = np.asarray(hit, dtype=float)
    w = augmentation_weights(X, Y, delta, censor_times, censor_model, floor)
    s_y = np.maximum(censor_model.survival(X, Y), floor)
    direct = np.where(delta, (h - (1 - alpha)) / s_y, 0.0) + np.sum((eta_values - (1 - alpha)) * w, axis=1)
    rearranged = h - (1 - alpha) - np.sum((h[:, None] - eta_values) * w, axis=1)
    return direct, rearranged


def influence_function(record, censor_curve, eta, censor_times, beta, alpha, score,
                       floor: float = DEFAULT_POSITIVITY_FLOOR) -> float:
    """Direct form for one full record against a step censoring curve.

    ``eta(beta, u, X)`` follows the vectorized eta contract; ``score(X, t)``
    gives the non-conformity score.
    """
    direct, _ = _single(record, censor_curve, eta, censor_times, beta, alpha, score, floor)
    return direct


def influence_function_lemma_form(record, censor_curve, eta, censor_times, beta, alpha, score,
                                  floor: float = DEFAULT_POSITIVITY_FLOOR) -> float:
    """Rearranged form for one full record; arguments as in :func:`influence_function`."""
    _, rearranged = _single(record, censor_curve, eta, censor_times, beta, alpha, score, floor)
    return rearranged


class _CurveModel:
    def __init__(self, curve):
        self.curve = curve

    def survival(self, X, t):
        from .core import evaluate_curve

        return np.asarray(evaluate_curve(self.curve, t), dtype=float)


def _single(record, censor_curve, eta, censor_times, beta, alpha, score, floor):
    X = np.asarray(record.covariates, dtype=float).reshape(1, -1)
    u = np.asarray(censor_times, dtype=float)
    hit = np.asarray(score(X, np.array([record.event_time]))) >= beta
    eta_values = eta(beta, u, X) if u.size else np.zeros((1, 0))
    d, r = influence_finite_sum(X, [record.event_time], [record.censor_time], hit,
                                _CurveModel(censor_curve), eta_values, u, alpha, floor)
    return float(d[0]), float(r[0])
