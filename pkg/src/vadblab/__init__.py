"""Numerical laboratory for volume-above, distance-below convergence of conformal metrics."""

from .errors import (
    ConstructionError,
    DomainError,
    InputError,
    NumericalRangeError,
    ParameterError,
    UsageError,
    VadbError,
)
from .families import FamilySpec, check_construction_hyp, cinched_sphere, disk_blowup, torus_bubble
from .measures import boundary_area, volume
from .metric_core import (
    ConformalMetric,
    ModelManifold,
    comparison_check,
    curve_length,
    eval_metric,
)
from .vadb import RunConfig, flat_bound, hypothesis_report, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConformalMetric", "ConstructionError", "DomainError", "FamilySpec", "InputError",
    "ModelManifold", "NumericalRangeError", "ParameterError", "RunConfig", "UsageError",
    "VadbError", "boundary_area", "check_construction_hyp", "cinched_sphere",
    "comparison_check", "curve_length", "disk_blowup", "eval_metric", "flat_bound",
    "hypothesis_report", "run_experiment", "torus_bubble", "volume",
]
