"""Quantile factor models for matrix-valued panels.

Panels are numpy arrays of shape (T, p1, p2); an optional boolean mask of the
same shape marks observed entries.
"""

from ._mqf import (
    Degenerate,
    DimensionMismatch,
    FactorParams,
    FitResult,
    InvalidArgument,
    KernelSpec,
    SelectionResult,
    SimTruth,
    build_kernel,
    check_loss,
    common_component,
    default_bandwidth,
    fit,
    gen_panel,
    impute,
    init_random,
    loading_distance,
    noise_quantile,
    normalize,
    objective,
    rate_L,
    select,
    space_similarity,
    theta_distance,
)

__all__ = [
    "Degenerate",
    "DimensionMismatch",
    "FactorParams",
    "FitResult",
    "InvalidArgument",
    "KernelSpec",
    "SelectionResult",
    "SimTruth",
    "build_kernel",
    "check_loss",
    "common_component",
    "default_bandwidth",
    "fit",
    "gen_panel",
    "impute",
    "init_random",
    "loading_distance",
    "noise_quantile",
    "normalize",
    "objective",
    "rate_L",
    "select",
    "space_similarity",
    "theta_distance",
]
