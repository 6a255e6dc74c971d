"""Exception hierarchy shared by all modules."""


class WalkRGError(Exception):
    """Base class; ``module`` names the subsystem that raised."""

    module = "walkrg"


class ConfigurationError(WalkRGError, ValueError):
    pass


class DomainError(WalkRGError, ValueError):
    pass


class ScaleOverflowError(WalkRGError, ValueError):
    pass


class ScaleMismatchError(WalkRGError, ValueError):
    pass


class MixingFailure(WalkRGError, RuntimeError):
    """Pivot chain accepted too few moves during burn-in."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedRegime(WalkRGError, ValueError):
    pass


class SingularCovarianceError(WalkRGError, ValueError):
    pass


class ConstructionError(WalkRGError, RuntimeError):
    pass


class ComplexityError(WalkRGError, RuntimeError):
    pass


class UnsupportedValueError(WalkRGError, TypeError):
    pass


class QuadratureError(WalkRGError, RuntimeError):
    pass


class DifferentiationError(WalkRGError, RuntimeError):
    pass


class BracketingError(WalkRGError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitError(WalkRGError, RuntimeError):
    pass
