"""Exception hierarchy. ValidationError maps to CLI exit code 1, MethodError to 2."""


class NoisyLabelsError(Exception):
    """Base class for all package errors."""


class ValidationError(NoisyLabelsError):
    """Bad inputs: malformed files, invalid configs, broken preconditions."""


class DataFormatError(ValidationError):
    """A corpus file that cannot be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnreachableNoiseLevelError(ValidationError):
    """Requested annotation-noise level exceeds available disagreements."""

    def __init__(self, requested: float, max_attainable: float):
        super().__init__(
            f"requested noise level {requested:.4f} unreachable; "
            f"maximum attainable is {max_attainable:.4f}"
        )
        self.requested = requested
        self.max_attainable = max_attainable


class MethodError(NoisyLabelsError):
    """A training/cleaning method failed at runtime (not a validation problem)."""


class DivergenceError(MethodError):
    """Non-finite loss or gradients; caller should reduce the learning rate."""


class ConsensusCollapseError(MethodError):
    """Consensus training saw no agreeing instances for an entire epoch."""


class EmptyCleanedSetError(MethodError):
    """Noise cleaning removed every training instance."""
