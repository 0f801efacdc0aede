"""Exception types raised across the package."""


class WipcomError(Exception):
    """Base class for all package errors."""


class DimensionError(WipcomError, ValueError):
    pass


class InvalidParameterError(WipcomError, ValueError):
    """A parameter vector is physically inconsistent (e.g. non-positive mass)."""


class DegenerateConfigurationError(WipcomError):
    """The body CoM coincides with the wheel axle; no unique balance angle."""


class InfeasibleTargetError(WipcomError):
    pass


class PoolGenerationError(WipcomError):
    pass


class NumericDegeneracyError(WipcomError):
    pass


class SimulationDivergedError(WipcomError):
    """Non-finite state, or the body fell past horizontal."""


class SynthesisError(WipcomError):
    """LQR synthesis failed (non-stabilizable pair or Newton divergence)."""


class ObserverDivergedError(WipcomError):
    pass


class BalanceTimeoutError(WipcomError):
    pass


class LearningDivergedError(WipcomError):
    pass


class ConfigError(WipcomError):
    pass
