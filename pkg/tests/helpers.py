"""Hand-built models and curves shared by the tests."""

import numpy as np

from survlpb.core import CurveBatch, StepSurvivalCurve


class CurveModel:
    """Same step curve for every subject."""

    def __init__(self, knots, values):
        self.curve = StepSurvivalCurve(knots, values)

    def predict_curve(self, x):
        return self.curve

    def predict_curves(self, X):
        n = np.asarray(X).reshape(len(X), -1).shape[0]
        return CurveBatch(self.curve.knots, np.tile(self.curve.values, (n, 1)))

    def survival(self, X, t):
        return self.predict_curves(X).evaluate(t)

    def quantiles(self, X, betas):
        return self.predict_curves(X).quantiles(betas)


class ColumnSurvival:
    """``S(t | x) = x[col]`` for every t: hand-set censoring probabilities."""

    def __init__(self, col=0):
        self.col = col

    def survival(self, X, t):
        s = np.asarray(X, dtype=float)[:, self.col]
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(s[:, None], t.shape).copy() if t.ndim == 2 else s.copy()


class ColumnScore:
    """``R(x, t) = x[col]``."""

    def __init__(self, col=1):
        self.col = col

    def __call__(self, X, t):
        return np.asarray(X, dtype=float)[:, self.col]


class ConstantSurvival:
    def __init__(self, value=1.0):
        self.value = value

    def survival(self, X, t):
        t = np.asarray(t, dtype=float)
        n = np.asarray(X).shape[0]
        shape = t.shape if t.ndim == 2 else (n,)
        return np.full(shape, self.value)


def random_curve(rng, n_knots=None, reach_zero=None):
    n_knots = int(rng.integers(1, 12)) if n_knots is None else n_knots
    knots = np.cumsum(rng.uniform(0.1, 2.0, n_knots))
    drops = rng.uniform(0, 1, n_knots)
    values = np.cumprod(1 - drops * rng.uniform(0.05, 0.9))
    if reach_zero or (reach_zero is None and rng.random() < 0.3):
        values[-1] = 0.0
    return StepSurvivalCurve(knots, np.minimum.accumulate(values))
