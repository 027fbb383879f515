"""Diffusion models with an adaptive linear forward drift."""

from ._vsdm import (
    BetaSchedule,
    CheckpointError,
    DomainError,
    KernelError,
    ParseError,
    SamplerError,
    TrainingRun,
    energy_distance,
    energy_permutation_test,
    gaussian_marginal,
    generate,
    kernel,
    kernel_check,
    outer_fraction,
    straightness,
)

__all__ = [
    "BetaSchedule",
    "CheckpointError",
    "DomainError",
    "KernelError",
    "ParseError",
    "SamplerError",
    "TrainingRun",
    "energy_distance",
    "energy_permutation_test",
    "gaussian_marginal",
    "generate",
    "kernel",
    "kernel_check",
    "outer_fraction",
    "straightness",
]
