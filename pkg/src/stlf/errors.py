"""Exception types shared across the package."""


class STLFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(STLFError, ValueError):
    pass


class DomainError(STLFError, ValueError):
    """An argument lies outside the domain of the operation."""


class FormatError(STLFError, ValueError):
    pass


class TrainingError(STLFError, RuntimeError):
    pass


class ProtocolError(STLFError, RuntimeError):
    pass


class UsageError(STLFError, ValueError):
    pass


class DegeneratePlanError(STLFError, RuntimeError):
    pass


class SubproblemFailure(STLFError, RuntimeError):
    """The convex subproblem solver gave up; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StageError(STLFError, RuntimeError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
