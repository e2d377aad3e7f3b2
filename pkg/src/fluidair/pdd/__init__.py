"""Penalty dual decomposition solver for joint selection, beamforming and
antenna positioning."""

from fluidair.pdd.solver import PddResult, solve
from fluidair.pdd.state import (
    DualState,
    PddConfig,
    PddProblem,
    PddState,
    augmented_lagrangian,
    initial_state,
    residual_inf_norm,
    residuals,
)

__all__ = [
    "DualState",
    "PddConfig",
    "PddProblem",
    "PddResult",
    "PddState",
    "augmented_lagrangian",
    "initial_state",
    "residual_inf_norm",
    "residuals",
    "solve",
]
