"""Fluid-antenna over-the-air federated learning: channel model, analog
aggregation, convergence surrogate and a penalty dual decomposition solver."""

from fluidair.errors import (
    DegenerateChannelError,
    EmptySelectionError,
    InvalidArgumentError,
    NumericDegeneracyError,
    PackingError,
    SolverFailure,
    ZeroGradientError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateChannelError",
    "EmptySelectionError",
    "InvalidArgumentError",
    "NumericDegeneracyError",
    "PackingError",
    "SolverFailure",
    "ZeroGradientError",
]
