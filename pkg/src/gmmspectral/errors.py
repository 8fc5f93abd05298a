"""Exception types shared across the package."""


class GmmSpectralError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GmmSpectralError, ValueError):
    """Invalid user-supplied configuration or input (CLI exit code 2)."""


class DimensionTooSmall(ConfigError):
    pass


class InfeasibleBalance(ConfigError):
    pass


class KExceedsN(ConfigError):
    pass


class ShapeMismatch(GmmSpectralError, ValueError):
    pass


class LabelError(GmmSpectralError, ValueError):
    """Label vectors of different length or with entries outside [k]."""


class EmptyInputClass(GmmSpectralError, ValueError):
    pass


class InstanceTooLarge(GmmSpectralError, ValueError):
    pass


class RankRequestTooLarge(GmmSpectralError, ValueError):
    pass


class NoConvergence(GmmSpectralError, RuntimeError):
    pass


class NoiseModelNotIsotropic(GmmSpectralError, ValueError):
    pass


class InsufficientUncensoredPoints(GmmSpectralError):
    """Fewer than two grid points carry a positive mean loss (CLI exit code 3)."""
