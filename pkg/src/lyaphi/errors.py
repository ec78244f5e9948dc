"""Exception types raised across the package."""


class LyaphiError(Exception):
    """Base class for all package errors."""


class DimensionError(LyaphiError, ValueError):
    """Operand shapes do not agree."""


class NonFiniteError(LyaphiError, ArithmeticError):
    """A computation produced inf or nan entries."""


class BudgetError(LyaphiError, RuntimeError):
    """A size, memory or iteration budget was exceeded."""


class PrecisionError(LyaphiError, ArithmeticError):
    """High-precision series arithmetic lost too many digits."""


class StageError(LyaphiError):
    """Failure inside a staged computation; carries the stage label."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")
