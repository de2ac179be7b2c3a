"""Calibrated lower predictive bounds for right-censored survival times."""

from .calibration import BetaGrid, CalibrationConfig, CalibrationResult, LPBModel, Method, calibrate
from .core import (
    DEFAULT_POSITIVITY_FLOOR,
    Dataset,
    FullData,
    FullRecord,
    ObservedRecord,
    StepSurvivalCurve,
    evaluate_curve,
    split_dataset,
    survival_quantile,
)
from .datagen import generate
from .nuisance import TargetKind, cox_fit, km_fit, knn_km_fit
from .scores import QuantileEta, QuantileScore

__all__ = [
    "BetaGrid", "CalibrationConfig", "CalibrationResult", "LPBModel", "Method", "calibrate",
    "DEFAULT_POSITIVITY_FLOOR", "Dataset", "FullData", "FullRecord", "ObservedRecord",
    "StepSurvivalCurve", "evaluate_curve", "split_dataset", "survival_quantile",
    "generate", "TargetKind", "cox_fit", "km_fit", "knn_km_fit", "QuantileEta", "QuantileScore",
]
