"""Blind gain/phase calibration of uniform arrays with off-grid frequency recovery."""

from .algebraic import run_partial_algebraic
from .errors import BlindCalError
from .metrics import align, cal_error, supp_error
from .model import FrequencySet, CalibrationVector, ProblemInstance, exact_covariance, make_instance, sample_snapshots
from .optim import OptimConfig, run_optimizer

__all__ = [
    "BlindCalError",
    "CalibrationVector",
    "FrequencySet",
    "OptimConfig",
    "ProblemInstance",
    "align",
    "cal_error",
    "exact_covariance",
    "make_instance",
    "run_optimizer",
    "run_partial_algebraic",
    "sample_snapshots",
    "supp_error",
]
