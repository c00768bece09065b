"""Exception types shared across the package."""


class QoslinkError(Exception):
    """Base class for all qoslink-specific errors."""


class ValidationError(QoslinkError):
    """Malformed input document; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class NoUniqueStationary(QoslinkError):
    """Chain/generator does not have a unique stationary distribution."""


class NonConvergence(QoslinkError):
    """Power iteration failed to converge within the iteration cap."""


class DegenerateEstimate(QoslinkError):
    """Monte Carlo estimate underflowed or is otherwise unusable."""


class QuadratureFailure(QoslinkError):
    """Adaptive integration did not reach the requested tolerance."""


class InvalidRegime(QoslinkError):
    """Closed-form solver hit an argument outside its proven domain."""


class BracketFailure(QoslinkError):
    """Root bracketing never enclosed the target (degenerate source)."""


class UnstableQueue(QoslinkError):
    """Mean arrival rate exceeds mean service rate; queue diverges."""


class InsufficientTail(QoslinkError):
    """Too few usable tail points for a decay-slope fit."""


class IllConditioned(QoslinkError):
    """Numerical differentiation stencils disagree beyond tolerance."""
