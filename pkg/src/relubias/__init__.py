"""Gradient-descent dynamics and implicit bias of shallow ReLU regression."""

__version__ = "0.1.0"

from .spectral_data import Constants, DataError, Dataset, LabelSpec, Spectrum, make_spectrum, sample_dataset
from .relu_model import ModelState, empirical_risk, gradient, predict
from .gd_engine import StopRule, Trajectory, init_single, init_two, recommend_step_size, run
from .min_norm import linear_mni, min_norm_single, min_norm_two

__all__ = [
    "Constants",
    "DataError",
    "Dataset",
    "LabelSpec",
    "ModelState",
    "Spectrum",
    "StopRule",
    "Trajectory",
    "empirical_risk",
    "gradient",
    "init_single",
    "init_two",
    "linear_mni",
    "make_spectrum",
    "min_norm_single",
    "min_norm_two",
    "predict",
    "recommend_step_size",
    "run",
    "sample_dataset",
]
