"""Exception types shared across the toolkit."""


class AtagError(Exception):
    """Base class for all toolkit errors."""


class ParseError(AtagError):
    """A file or record could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(AtagError):
    """Input violated a documented precondition or invariant."""


class GraphConstructionError(AtagError):
    """No valid graph could be built from the given corpus and thresholds."""


class GraphFormatError(AtagError):
    """A graph file is malformed or violates a structural invariant."""


class CheckpointError(AtagError):
    """A checkpoint file is malformed, version-mismatched, or bound to another graph."""
