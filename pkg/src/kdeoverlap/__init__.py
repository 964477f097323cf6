"""Kernel density estimates of the Pianka and MacArthur-Levins overlap
measures, with plug-in asymptotic variances and a Monte Carlo checker."""

from .exceptions import DegenerateDensityError, ValidationError
from .kde import (
    BandwidthRule,
    DensityEstimate,
    Sample,
    assumption_diagnostics,
    bandwidth,
    kde_eval,
    kde_grid,
)
from .kernels import BIWEIGHT, BOX, EPANECHNIKOV, KERNELS, TRIANGULAR, KernelSpec, eval_kernel, get_kernel, kernel_moment
from .overlap import (
    AnalysisConfig,
    ConfidenceInterval,
    OverlapReport,
    confidence_interval,
    estimate_overlap,
    macarthur_levins,
    ml_variance,
    pianka,
    pianka_variance,
)
from .quadrature import MomentTable, SupportInterval, build_moment_table, integrate, moment_integral

__version__ = "0.1.0"

__all__ = [
    "DegenerateDensityError", "ValidationError",
    "BandwidthRule", "DensityEstimate", "Sample", "assumption_diagnostics", "bandwidth", "kde_eval", "kde_grid",
    "BIWEIGHT", "BOX", "EPANECHNIKOV", "KERNELS", "TRIANGULAR", "KernelSpec", "eval_kernel", "get_kernel",
    "kernel_moment",
    "AnalysisConfig", "ConfidenceInterval", "OverlapReport", "confidence_interval", "estimate_overlap",
    "macarthur_levins", "ml_variance", "pianka", "pianka_variance",
    "MomentTable", "SupportInterval", "build_moment_table", "integrate", "moment_integral",
]
