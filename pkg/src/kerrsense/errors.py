"""Exception hierarchy shared by all modules.

Every domain failure derives from :class:`KerrSenseError`; the CLI maps those
to exit status 1 and everything else (bad arguments, bad config) to 2.
"""


class KerrSenseError(Exception):
    """Base class for domain errors."""


class NoConvergence(KerrSenseError):
    pass


class TruncationLeak(KerrSenseError):
    """Population in the top Fock levels exceeds the allowed leak."""

    def __init__(self, leak, tol, dim):
        self.leak, self.tol, self.dim = leak, tol, dim
        super().__init__(
            f"top-level population {leak:.3e} exceeds {tol:.1e} at dim={dim}; "
            "enlarge the Fock truncation")


class NegativeEigenvalue(KerrSenseError):
    pass


class StepFailure(KerrSenseError):
    pass


class NoTransition(KerrSenseError):
    pass


class DegenerateFit(KerrSenseError):
    pass


class InvalidNoise(KerrSenseError):
    pass


class MomentInfeasible(KerrSenseError):
    pass


class ShapeError(KerrSenseError):
    pass


class ParseError(KerrSenseError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FluxSingularity(KerrSenseError):
    pass


class RootNotBracketed(KerrSenseError):
    pass


class FitDiverged(KerrSenseError):
    pass


class InsufficientSpan(KerrSenseError):
    pass


class ConfigError(Exception):
    """Usage-level configuration problem (exit status 2)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ConfigError):
    pass


class MissingKey(ConfigError):
    pass
