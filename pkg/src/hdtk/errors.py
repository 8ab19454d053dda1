"""Exception types shared across the toolkit."""


class HdtkError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(HdtkError, ValueError):
    """Array extents violate an operation's requirements (e.g. non power-of-two FFT size)."""


class RankError(HdtkError, ValueError):
    """Requested rank is outside the valid range."""


class ShapeError(HdtkError, ValueError):
    """Mismatched array shapes."""


class MaskError(HdtkError, ValueError):
    """Infeasible sampling-mask construction."""


class SpecError(HdtkError, ValueError):
    """Invalid phantom or run specification."""


class DataError(HdtkError, ValueError):
    """Missing or inconsistent input data."""


class ConfigError(HdtkError, ValueError):
    """Invalid or unknown configuration entry."""


class TensorFileError(HdtkError, IOError):
    """Corrupt or malformed tensor file."""


class NumericalError(HdtkError, RuntimeError):
    """Numerical breakdown (non-finite values, solver divergence).

    Carries the best iterate seen so far in ``best`` when available.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}
