"""Exception and warning types raised across the toolkit."""


class StochavgError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameter(StochavgError, ValueError):
    """A model or run parameter is outside its admissible range."""


class UnbalancedKernel(InvalidParameter):
    """Row and column sums of a migration matrix disagree."""


class NonpositiveWeight(InvalidParameter):
    """A deme weight gamma_i is not strictly positive."""


class PopulationOverflow(StochavgError, RuntimeError):
    """Total particle count exceeded the configured cap."""


class StepTooLarge(InvalidParameter):
    """Integrator step exceeds the horizon."""


class InsufficientSamples(InvalidParameter):
    """Too few samples for the requested statistic."""


class GridMismatch(InvalidParameter):
    """Two ensembles do not share time grid or deme labels."""


class ConfigError(InvalidParameter):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ValueOutOfBins(UserWarning):
    """A transformed environment value fell outside the value bins."""
