"""Exception hierarchy shared by all netlqr modules."""

from __future__ import annotations


class NetLQRError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(NetLQRError, ValueError):
    """An array argument has a shape that does not match the model."""


class ValidationError(NetLQRError):
    """A model failed validation.

    The individual violations are kept on ``violations`` so callers (the CLI
    in particular) can report all of them at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(f"invalid model ({len(self.violations)} violation(s)): {lines}")


class GenerationError(NetLQRError):
    """Random model generation gave up (rejection sampling retry cap)."""


class SynthesisError(NetLQRError):
    """A Riccati-type step hit a singular or ill-conditioned inner matrix."""

    def __init__(self, message, t=None, subsystem=None):
        self.t = t
        self.subsystem = subsystem
        where = []
        if t is not None:
            where.append(f"t={t}")
        if subsystem is not None:
            where.append(f"subsystem={subsystem}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class ArtifactMismatch(NetLQRError):
    """A gains file does not belong to the model it is used with."""


class FormatError(NetLQRError, ValueError):
    """A JSON document does not follow the expected versioned schema."""


class StructureError(NetLQRError):
    """A model does not have the structure a special-case check requires."""
