"""Safeguarded augmented Lagrangian method for quasi-variational inequalities."""

from .alm import AlmConfig, AlmReport, IterationRecord, Status, alm_solve
from .newton import NewtonConfig, NewtonResult, ViOperator, semismooth_newton
from .problem import (
    BoxSet,
    ContractError,
    EvaluationError,
    KktPoint,
    QviProblem,
    dist_K,
    inner,
    norm,
    project_box,
    project_polar_cone,
    validate_problem,
)
from .problems import (
    GnepData,
    GradientQviData,
    SignoriniData,
    build_analytic_moving_set,
    build_gnep,
    build_gradient_qvi,
    build_linear_vi,
    build_signorini,
    qvi_from_vi,
)

__all__ = [
    "AlmConfig", "AlmReport", "IterationRecord", "Status", "alm_solve",
    "NewtonConfig", "NewtonResult", "ViOperator", "semismooth_newton",
    "BoxSet", "ContractError", "EvaluationError", "KktPoint", "QviProblem",
    "dist_K", "inner", "norm", "project_box", "project_polar_cone", "validate_problem",
    "GnepData", "GradientQviData", "SignoriniData", "build_analytic_moving_set",
    "build_gnep", "build_gradient_qvi", "build_linear_vi", "build_signorini", "qvi_from_vi",
]

__version__ = "0.1.0"
