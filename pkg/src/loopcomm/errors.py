"""Exception types shared across the package."""


class LoopcommError(Exception):
    """Base class for all package errors."""


class InvalidParameter(LoopcommError):
    """A single configuration invariant violation."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ConfigValidationError(LoopcommError):
    """One or more configuration invariants are violated.

    Carries every violation found, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{v.field}: {v.reason}" for v in self.violations)
        super().__init__(f"invalid configuration: {msg}")


class PropagatorFailure(LoopcommError):
    """The matrix-exponential propagation produced non-finite or asymmetric results."""


class RealnessViolation(LoopcommError):
    """Reconstructed field has an imaginary residue above tolerance."""


class HorizonTooLong(LoopcommError):
    """Open-loop extension factor too small for the requested time horizon."""


class GridMismatch(LoopcommError):
    """Output grid is not commensurate with the simulation step."""


class GridAlignment(LoopcommError):
    """Sequence timing is not an integer multiple of the series step."""


class UpstreamUnsupported(LoopcommError):
    """Peak-time formula asked for an upstream (receiver behind transmitter) link."""


class NoEquilibrium(LoopcommError):
    """Equilibrium concentration is undefined without damping."""
