"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """Malformed input file; ``line`` is 1-based (header is line 1)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateFusionError(ValidationError):
    """Consensus fusion of two dogmatic (zero-uncertainty) opinions."""


class InvalidActionError(ValidationError):
    """Selector action refers to an already-selected or masked vehicle."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""
