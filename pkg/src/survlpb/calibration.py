"""Calibration of lower predictive bounds: HT-IPCW, IPCW, AIPCW, OR and COR.

All procedures scan a grid of levels ``beta`` and return the largest grid value
whose estimated coverage statistic clears the target.  Nuisance models are
fitted elsewhere (on the training split) and passed in; every divisor built
from a censoring survival curve is clamped below at ``positivity_floor``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_POSITIVITY_FLOOR, Dataset, ObservedRecord, StepSurvivalCurve, evaluate_curve
from .scores import QuantileEta, QuantileScore, default_grid, lpb_from_score


class Method(enum.Enum):
    HT_IPCW = "HT_IPCW"
    IPCW = "IPCW"
    AIPCW = "AIPCW"
    OR = "OR"
    COR = "COR"


@dataclass(frozen=True, eq=False)
class BetaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size < 2 or v[0] != 0.0 or v[-1] != 1.0 or np.any(np.diff(v) <= 0):
            raise ValueError("grid must be strictly increasing from 0 to 1")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, step: float = 0.001) -> "BetaGrid":
        return cls(default_grid(step))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class CalibrationConfig:
    alpha: float = 0.1
    grid: BetaGrid = field(default_factory=BetaGrid.uniform)
    positivity_floor: float = DEFAULT_POSITIVITY_FLOOR

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.positivity_floor < 1:
            raise ValueError("positivity_floor must lie in (0, 1)")


@dataclass(eq=False)
class CalibrationResult:
    method: Method
    alpha: float
    beta_hat: float
    degenerate: bool
    grid: np.ndarray
    statistic: np.ndarray
    w: np.ndarray | None = None
    pi: np.ndarray | None = None

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in a]

        return {
            "method": self.method.value,
            "alpha": self.alpha,
            "beta_hat": self.beta_hat,
            "flag": "degenerate" if self.degenerate else "",
            "grid": arr(self.grid),
            "statistic": arr(self.statistic),
            "W": arr(self.w),
            "Pi": arr(self.pi),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        doc = json.loads(text)

        def arr(a):
            return None if a is None else np.array(a, dtype=float)

        return cls(Method(doc["method"]), doc["alpha"], doc["beta_hat"], doc["flag"] == "degenerate",
                   arr(doc["grid"]), arr(doc["statistic"]), arr(doc["W"]), arr(doc["Pi"]))


class LPBModel:
    """Prediction region ``{t : score(x, t) >= beta_hat}`` as a lower bound ``L(x)``."""

    def __init__(self, score, beta_hat: float, survival_model=None):
        self.score = score
        self.beta_hat = beta_hat
        self.survival_model = survival_model if survival_model is not None else getattr(score, "survival_model", None)

    def predict(self, X) -> np.ndarray:
        return lpb_from_score(X, self.score, self.beta_hat, self.survival_model)


# ---------------------------------------------------------------------------
# IPCW pieces


def _check_nonempty(data: Dataset):
    if data.n == 0:
        raise ValueError("calibration set is empty")


def _score_hits(data: Dataset, score, grid) -> np.ndarray:
    """``hits[i, j] = 1{R(X_i, Y_i) >= beta_j}``."""
    s = np.asarray(score(data.X, data.time), dtype=float)
    return s[:, None] >= np.asarray(grid, dtype=float)[None, :]


def ipcw_weights(data: Dataset, censor_model, floor: float = DEFAULT_POSITIVITY_FLOOR) -> np.ndarray:
    """``Delta_i / clamp(S_C(Y_i | X_i))``; zero for censored subjects."""
    s = censor_model.survival(data.X, data.time)
    return np.where(data.event, 1.0 / np.maximum(s, floor), 0.0)


def ht_ipcw_coverage(calib: Dataset, score, censor_model, beta, floor: float = DEFAULT_POSITIVITY_FLOOR):
    """Horvitz-Thompson IPCW coverage estimate; may exceed 1."""
    _check_nonempty(calib)
    beta_arr = np.atleast_1d(np.asarray(beta, dtype=float))
    w = ipcw_weights(calib, censor_model, floor)
    out = (w @ _score_hits(calib, score, beta_arr)) / calib.n
    return float(out[0]) if np.ndim(beta) == 0 else out


def hajek_w(calib: Dataset, score, censor_model, beta, alpha: float, floor: float = DEFAULT_POSITIVITY_FLOOR):
    """IPCW estimating function ``W(beta)``, averaged over the calibration set."""
    _check_nonempty(calib)
    beta_arr = np.atleast_1d(np.asarray(beta, dtype=float))
    w = ipcw_weights(calib, censor_model, floor)
    covered = w @ _score_hits(calib, score, beta_arr)
    out = (covered - (1.0 - alpha) * w.sum()) / calib.n
    return float(out[0]) if np.ndim(beta) == 0 else out


def select_beta(grid, stats) -> tuple[float, bool]:
    """Largest grid value with nonnegative statistic; ``(grid[0], True)`` if none."""
    grid = np.asarray(grid, dtype=float)
    stats = np.asarray(stats, dtype=float)
    if grid.shape != stats.shape:
        raise ValueError("statistics must align with the grid")
    ok = np.nonzero(stats >= 0)[0]
    if ok.size == 0:
        return float(grid[0]), True
    return float(grid[ok[-1]]), False


# ---------------------------------------------------------------------------
# augmentation


def censoring_times(data: Dataset) -> np.ndarray:
    """Distinct ordered follow-up times of censored subjects."""
    return np.unique(data.time[~data.event])


def martingale_increments(
    record: ObservedRecord,
    censor_curve: StepSurvivalCurve,
    censor_times,
    floor: float = DEFAULT_POSITIVITY_FLOOR,
) -> np.ndarray:
    """``M(u_k) - M(u_{k-1})`` for one subject, with
    ``M(u) = 1{Y <= u, Delta = 0} + log clamp(S_C(min(Y, u)))`` and ``M(0) = 0``.
    """
    u = np.asarray(censor_times, dtype=float)
    Y = record.time
    jump = (not record.event) & (Y <= u)
    logs = np.log(np.maximum(evaluate_curve(censor_curve, np.minimum(Y, u)), floor))
    M = jump + logs
    return np.diff(M, prepend=0.0)


def augmentation_weights(X, Y, event, u, censor_model, floor: float = DEFAULT_POSITIVITY_FLOOR) -> np.ndarray:
    """``dM_ik / clamp(S_C(u_k | X_i))`` for all subjects and censoring times."""
    Y = np.asarray(Y, dtype=float)
    event = np.asarray(event, dtype=bool)
    u = np.asarray(u, dtype=float)
    n, Q = Y.size, u.size
    if Q == 0:
        return np.zeros((n, 0))
    s_u = np.maximum(censor_model.survival(X, np.broadcast_to(u, (n, Q))), floor)
    y_and_u = np.minimum(Y[:, None], u[None, :])
    logs = np.log(np.maximum(censor_model.survival(X, y_and_u), floor))
    M = ((~event)[:, None] & (Y[:, None] <= u[None, :])) + logs
    return np.diff(M, axis=1, prepend=0.0) / s_u


def augmentation_pi(
    calib: Dataset,
    eta,
    censor_model,
    beta,
    alpha: float,
    floor: float = DEFAULT_POSITIVITY_FLOOR,
    censor_times=None,
):
    """Augmentation term ``Pi(beta)``.

    ``eta(beta, u, X)`` must return an array of shape (n, len(u)).
    Censoring times default to those observed in ``calib``.
    """
    _check_nonempty(calib)
    u = censoring_times(calib) if censor_times is None else np.asarray(censor_times, dtype=float)
    w = augmentation_weights(calib.X, calib.time, calib.event, u, censor_model, floor)
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    out = np.empty(betas.size)
    for j, b in enumerate(betas):
        if u.size == 0:
            out[j] = 0.0
            continue
        e = eta(b, u, calib.X)
        out[j] = np.sum((e - (1.0 - alpha)) * w) / calib.n
    return float(out[0]) if np.ndim(beta) == 0 else out


def _pi_quantile_grid(calib: Dataset, survival_model, censor_model, grid, alpha, floor, q=None, s_q=None):
    """``Pi`` over the whole grid for the pseudo-quantile eta, via prefix sums.

    For subject i, ``eta = 1`` at censoring times ``u_k >= q_i(beta)`` and
    ``S_T(q_i) / clamp(S_T(u_k))`` before; both pieces are prefix sums in k.
    """
    u = censoring_times(calib)
    if u.size == 0:
        return np.zeros(len(grid))
    if q is None:
        q, s_q = survival_model.quantiles(calib.X, grid)
    w = augmentation_weights(calib.X, calib.time, calib.event, u, censor_model, floor)
    n, Q = w.shape
    s_t = np.maximum(survival_model.survival(calib.X, np.broadcast_to(u, (n, Q))), floor)
    zeros = np.zeros((n, 1))
    w_cum = np.concatenate([zeros, np.cumsum(w, axis=1)], axis=1)
    v_cum = np.concatenate([zeros, np.cumsum(w / s_t, axis=1)], axis=1)
    idx = np.searchsorted(u, q, side="left")
    total = w_cum[:, -1:]
    eta_w = (total - np.take_along_axis(w_cum, idx, axis=1)) + s_q * np.take_along_axis(v_cum, idx, axis=1)
    return (eta_w - (1.0 - alpha) * total).sum(axis=0) / n


# ---------------------------------------------------------------------------
# dispatch


def calibrate(
    calib: Dataset,
    method: Method | str,
    config: CalibrationConfig | None = None,
    *,
    score=None,
    censor_model=None,
    eta=None,
    survival_model=None,
) -> CalibrationResult:
    """Choose ``beta_hat`` on the calibration split.

    Required nuisances by method: HT_IPCW and IPCW need ``score`` and
    ``censor_model``; AIPCW additionally needs ``eta``; COR needs
    ``survival_model``; OR needs nothing and returns ``beta_hat = alpha``.
    When ``score`` is omitted but ``survival_model`` is given, the
    pseudo-quantile score of that model is used (and its eta for AIPCW).
    """
    cfg = config or CalibrationConfig()
    method = Method(method) if isinstance(method, str) else method
    grid = cfg.grid.values
    alpha, floor = cfg.alpha, cfg.positivity_floor
    if score is None and survival_model is not None:
        score = QuantileScore(survival_model, grid)
    if eta is None and method is Method.AIPCW and survival_model is not None:
        eta = QuantileEta(survival_model, floor)

    if method is Method.OR:
        beta_hat = alpha
        if not np.any(np.isclose(grid, alpha, rtol=0, atol=1e-12)):
            raise ValueError("alpha must be a grid point for the OR method")
        return CalibrationResult(method, alpha, float(beta_hat), False, grid, np.zeros_like(grid))

    _check_nonempty(calib)
    if method is Method.COR:
        if survival_model is None:
            raise ValueError("COR needs survival_model")
        _, s_q = survival_model.quantiles(calib.X, grid)
        stat = s_q.mean(axis=0) - (1.0 - alpha)
        beta_hat, flag = select_beta(grid, stat)
        return CalibrationResult(method, alpha, beta_hat, flag, grid, stat)

    if score is None or censor_model is None:
        raise ValueError(f"{method.value} needs score and censor_model")
    w_ipcw = ipcw_weights(calib, censor_model, floor)
    covered = w_ipcw @ _score_hits(calib, score, grid)

    if method is Method.HT_IPCW:
        stat = covered / calib.n - (1.0 - alpha)
        beta_hat, flag = select_beta(grid, stat)
        return CalibrationResult(method, alpha, beta_hat, flag, grid, stat)

    W = (covered - (1.0 - alpha) * w_ipcw.sum()) / calib.n
    if method is Method.IPCW:
        beta_hat, flag = select_beta(grid, W)
        return CalibrationResult(method, alpha, beta_hat, flag, grid, W, w=W)

    if method is Method.AIPCW:
        if eta is None:
            raise ValueError("AIPCW needs eta")
        fast = (
            isinstance(eta, QuantileEta)
            and isinstance(score, QuantileScore)
            and eta.survival_model is score.survival_model
            and eta.floor == floor
            and np.array_equal(score.grid, grid)
        )
        if fast:
            Pi = _pi_quantile_grid(calib, eta.survival_model, censor_model, grid, alpha, floor)
        else:
            Pi = augmentation_pi(calib, eta, censor_model, grid, alpha, floor)
        stat = W + Pi
        beta_hat, flag = select_beta(grid, stat)
        return CalibrationResult(method, alpha, beta_hat, flag, grid, stat, w=W, pi=Pi)

    raise ValueError(f"unknown method {method!r}")
