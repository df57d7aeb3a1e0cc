"""Exception types shared across the package."""


class MvsdeError(Exception):
    """Base class for all package-specific errors."""


class NonFinite(MvsdeError):
    """An input point contains NaN or infinite components."""


class DegenerateSet(MvsdeError):
    """Convex-set parameters describe an empty set (e.g. lo > hi)."""


class LengthMismatch(MvsdeError):
    """Paths and time grid do not have matching lengths."""


class MissingMetadata(MvsdeError):
    """Operator lacks the interior point or variation constants required."""


class DimensionMismatch(MvsdeError):
    """Two measures or ensembles live in different dimensions."""


class SizeMismatch(MvsdeError):
    """Paired-sample operations require equal particle counts."""


class GridMismatch(MvsdeError):
    """Two measure flows are defined on different time grids."""


class CoefficientBlowup(MvsdeError):
    """Drift or diffusion returned a non-finite value."""


class StateBlowup(MvsdeError):
    """Particle positions exceeded the blow-up threshold."""


class ZeroDenominator(MvsdeError):
    """Contraction ratio requested for coinciding measure flows."""


class NotConverged(MvsdeError):
    """Fixed-point iteration did not reach tolerance.

    Carries the sequence of per-iteration flow distances in ``deltas``.
    """

    def __init__(self, message, deltas=()):
        super().__init__(message)
        self.deltas = list(deltas)


class DegenerateFit(MvsdeError):
    """Decay-rate fit requested on a window with vanishing moments."""


class IndexOutOfRange(MvsdeError):
    """Step indices fall outside the trajectory grid."""


class ConfigError(MvsdeError):
    """Configuration file failed validation.

    ``issues`` is a list of ``(key_path, message)`` pairs.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = "; ".join(f"{k}: {m}" for k, m in self.issues)
        super().__init__(lines)
