"""Non-conformity scores and the conditional-coverage nuisance eta.

Scores take values in [0, 1] and are nondecreasing in t, so the prediction
region ``{t : score(x, t) >= beta}`` is always an interval ``[L(x), inf)``.
"""

from __future__ import annotations

import math

import numpy as np

from .core import DEFAULT_POSITIVITY_FLOOR, StepSurvivalCurve, evaluate_curve, survival_quantile


def default_grid(step: float = 0.001) -> np.ndarray:
    n_steps = round(1.0 / step)
    if n_steps < 1 or abs(n_steps * step - 1.0) > 1e-9:
        raise ValueError(f"grid step {step} does not divide [0, 1] evenly")
    return np.arange(n_steps + 1) / n_steps


def _grid_level(survival, grid) -> np.ndarray:
    """Largest grid beta with ``survival <= 1 - beta``.

    Uses the same ``1 - beta`` thresholds as the quantile inversion so that
    ``score >= beta`` and ``t >= q(beta)`` agree exactly on grid points.
    """
    grid = np.asarray(grid, dtype=float)
    thr_ascending = (1.0 - grid)[::-1]
    survival = np.asarray(survival, dtype=float)
    count = grid.size - np.searchsorted(thr_ascending, survival, side="left")
    return grid[np.maximum(count - 1, 0)]


class QuantileScore:
    """Pseudo-quantile score: largest grid level whose estimated quantile is <= t.

    ``score(x, t) >= beta`` holds exactly when ``t >= q(beta | x)`` for
    every grid value ``beta``.
    """

    def __init__(self, survival_model, grid=None):
        self.survival_model = survival_model
        self.grid = default_grid() if grid is None else np.asarray(grid, dtype=float)

    def __call__(self, X, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return _grid_level(self.survival_model.survival(X, t), self.grid)

    def lower_bound(self, X, beta) -> np.ndarray:
        q, _ = self.survival_model.quantiles(X, [beta])
        return q[:, 0]


def quantile_score(x, t: float, model, grid=None) -> float:
    """Score of a single point; see :class:`QuantileScore`."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    curve = model.predict_curve(x)
    return float(_grid_level(evaluate_curve(curve, t), grid))


def quantile_eta(beta: float, u: float, x, model, floor: float = DEFAULT_POSITIVITY_FLOOR) -> float:
    """``S(max(q(beta|x), u)) / S(u)``, or 1 once ``q(beta|x) <= u``."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    curve = model.predict_curve(x) if not isinstance(model, StepSurvivalCurve) else model
    q = survival_quantile(curve, beta)
    if q <= u:
        return 1.0
    return evaluate_curve(curve, q) / max(evaluate_curve(curve, u), floor)


class QuantileEta:
    """Vectorized :func:`quantile_eta`: ``eta(beta, u, X)`` has shape (n, len(u))."""

    def __init__(self, survival_model, floor: float = DEFAULT_POSITIVITY_FLOOR):
        self.survival_model = survival_model
        self.floor = floor

    def __call__(self, beta, u, X) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        X = np.asarray(X, dtype=float)
        q, s_q = self.survival_model.quantiles(X, [beta])
        q, s_q = q[:, :1], s_q[:, :1]
        n = q.shape[0]
        s_u = self.survival_model.survival(X, np.broadcast_to(u, (n, u.size)))
        out = s_q / np.maximum(s_u, self.floor)
        return np.where(q <= u[None, :], 1.0, out)


def _jump_masses(curve: StepSurvivalCurve):
    prev = np.concatenate([[1.0], curve.values[:-1]])
    return curve.knots, prev - curve.values


def generic_eta(beta: float, u: float, x, score, model, floor: float = DEFAULT_POSITIVITY_FLOOR) -> float:
    """Conditional probability that the score clears ``beta`` given survival past ``u``.

    The predicted event-time law is the jump measure of the fitted curve plus a
    point mass at +inf equal to the curve's tail value; that point gets score 1.
    Returns 1 once ``score(x, u) >= beta``, since scores are nondecreasing in t.
    """
    if u < 0:
        raise ValueError("u must be nonnegative")
    curve = model.predict_curve(x)
    knots, mass = _jump_masses(curve)
    x2 = np.asarray(x, dtype=float).reshape(1, -1)
    # scores are nondecreasing in t: every later time qualifies too
    if float(np.asarray(score(x2, np.array([u])))[0]) >= beta:
        return 1.0
    later = knots > u
    if later.any():
        s = np.asarray(score(np.repeat(x2, later.sum(), axis=0), knots[later]))
        num = float(np.sum(mass[later][s >= beta]))
    else:
        num = 0.0
    num += curve.floor * (1.0 >= beta)
    return min(num / max(evaluate_curve(curve, u), floor), 1.0)


class GenericEta:
    """Row-by-row :func:`generic_eta` for an arbitrary score; slow but general."""

    def __init__(self, score, survival_model, floor: float = DEFAULT_POSITIVITY_FLOOR):
        self.score = score
        self.survival_model = survival_model
        self.floor = floor

    def __call__(self, beta, u, X) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], u.size))
        for i, x in enumerate(X):
            curve = self.survival_model.predict_curve(x)
            knots, mass = _jump_masses(curve)
            s = np.asarray(self.score(np.repeat(x[None, :], knots.size, axis=0), knots))
            hit = np.where(s >= beta, mass, 0.0)
            # suffix sums: mass of qualifying jumps strictly after each u
            suffix = np.concatenate([np.cumsum(hit[::-1])[::-1], [0.0]])
            pos = np.searchsorted(knots, u, side="right")
            num = suffix[pos] + curve.floor * (1.0 >= beta)
            den = np.maximum(evaluate_curve(curve, u), self.floor)
            s_u = np.asarray(self.score(np.repeat(x[None, :], u.size, axis=0), u))
            out[i] = np.where(s_u >= beta, 1.0, np.minimum(num / den, 1.0))
        return out


def lpb_from_score(X, score, beta: float, survival_model) -> np.ndarray:
    """Smallest time at which ``score(x, t) >= beta``, scanning the model's knots."""
    if isinstance(score, QuantileScore):
        return score.lower_bound(X, beta)
    X = np.asarray(X, dtype=float)
    out = np.full(X.shape[0], math.inf)
    for i, x in enumerate(X):
        knots = survival_model.predict_curve(x).knots
        cand = np.concatenate([[0.0], knots])
        s = np.asarray(score(np.repeat(x[None, :], cand.size, axis=0), cand))
        ok = np.nonzero(s >= beta)[0]
        if ok.size:
            out[i] = cand[ok[0]]
    return out
