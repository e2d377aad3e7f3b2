"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class ZeroGradientError(ValueError):
    """A transmitting user has an all-zero gradient (normalizer undefined)."""


class DegenerateChannelError(ValueError):
    """An effective channel gain needed as a divisor is zero."""


class EmptySelectionError(ValueError):
    pass


class NumericDegeneracyError(ArithmeticError):
    pass


class PackingError(RuntimeError):
    """Antennas could not be placed with the requested separations."""


class SolverFailure(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
