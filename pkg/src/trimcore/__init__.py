"""Coresets for continuous-and-bounded learning with outliers.

Epsilon-coresets (uniform, importance, and cost-layered sampling), robust
(beta, eps)-coresets built around a suspected-outlier split, fully dynamic
maintenance under insert/delete/update/change-z, sensitivity bounds, and
trimmed solvers with a benchmarking CLI.
"""

from .builders import (
    BuilderSpec,
    Coreset,
    GspLayering,
    delta_sample_size,
    gsp_build,
    gsp_layering,
    importance_sample,
    mass_uniform_sample,
    uniform_sample,
)
from .data import Continuity, ParamBall, WeightedDataset, WeightedPoint, xi
from .dynamic import AuxTable, DynamicRobustCoreset, MergeReduceTree, OpStats
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateBallError,
    NonConvergenceError,
    NumericalError,
    TrimcoreError,
)
from .losses import (
    LipschitzCertificate,
    LossModel,
    continuity_for,
    dataset_costs,
    lipschitz_constant,
    model_from_json,
    model_to_json,
    param_distance,
    point_cost,
    point_costs,
    smooth_constants,
)
from .quality import SandwichReport, ball_grid, max_relative_error, sandwich_report
from .robust import (
    RobustCoreset,
    RobustSplit,
    build_robust,
    compute_eps0,
    quality_transfer_check,
    split,
)
from .sensitivity import (
    SensitivityProfile,
    maximize_ratio_on_ball,
    minimize_quadratic_on_ball,
    sensitivity_lipschitz,
    sensitivity_qfp,
    theoretical_sample_size,
)
from .solvers import SolveReport, fit_trimmed, kmeans_mm, local_search_seed, pilot_theta, trimmed_fit
from .synth import inject_outliers, synth_generate
from .trim import TrimPartition, objective_value, trimmed_argmask, trimmed_objective, trimmed_value

__version__ = "0.1.0"

__all__ = [
    "AuxTable",
    "BuilderSpec",
    "ConfigError",
    "Continuity",
    "Coreset",
    "DataFormatError",
    "DegenerateBallError",
    "DynamicRobustCoreset",
    "GspLayering",
    "LipschitzCertificate",
    "LossModel",
    "MergeReduceTree",
    "NonConvergenceError",
    "NumericalError",
    "OpStats",
    "ParamBall",
    "RobustCoreset",
    "RobustSplit",
    "SandwichReport",
    "SensitivityProfile",
    "SolveReport",
    "TrimPartition",
    "TrimcoreError",
    "WeightedDataset",
    "WeightedPoint",
    "ball_grid",
    "build_robust",
    "compute_eps0",
    "continuity_for",
    "dataset_costs",
    "delta_sample_size",
    "fit_trimmed",
    "gsp_build",
    "gsp_layering",
    "importance_sample",
    "inject_outliers",
    "kmeans_mm",
    "lipschitz_constant",
    "local_search_seed",
    "mass_uniform_sample",
    "max_relative_error",
    "maximize_ratio_on_ball",
    "minimize_quadratic_on_ball",
    "model_from_json",
    "model_to_json",
    "objective_value",
    "param_distance",
    "pilot_theta",
    "point_cost",
    "point_costs",
    "quality_transfer_check",
    "sandwich_report",
    "sensitivity_lipschitz",
    "sensitivity_qfp",
    "smooth_constants",
    "split",
    "synth_generate",
    "theoretical_sample_size",
    "trimmed_argmask",
    "trimmed_fit",
    "trimmed_objective",
    "trimmed_value",
    "uniform_sample",
    "xi",
]
