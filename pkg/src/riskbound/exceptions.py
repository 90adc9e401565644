class RiskboundError(Exception):
    """Base class for errors raised by this package."""


class InfeasibleCovarianceError(RiskboundError, ValueError):
    """The requested mixed moment lies outside the range attainable by couplings."""

    def __init__(self, k: float, k_range: tuple[float, float], what: str = "E[XY]"):
        self.k = k
        self.k_range = k_range
        lo, hi = k_range
        super().__init__(f"k={k:g} outside the feasible range of {what}: [{lo:g}, {hi:g}]")


class SolverError(RiskboundError, RuntimeError):
    """The simplex solver hit its iteration cap or lost numerical accuracy."""


class CertificateError(RiskboundError):
    """A dual certificate failed re-verification."""
