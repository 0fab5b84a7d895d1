"""Exception hierarchy. Each family carries the process exit code used by the CLI."""


class CtxSelError(Exception):
    exit_code = 1


class ConfigError(CtxSelError, ValueError):
    exit_code = 2


class NumericError(CtxSelError, ArithmeticError):
    exit_code = 3


class CapacityError(CtxSelError):
    exit_code = 4


class ShapeError(CtxSelError, ValueError):
    """Operand shapes are inconsistent."""


class DomainError(NumericError):
    """Input outside the function's domain (empty, non-finite, duplicated...)."""


class DegenerateVectorError(NumericError):
    """Zero-norm vector passed where a direction is needed."""


class EmptyContextError(CtxSelError, ValueError):
    """Attention requested over zero selected tokens."""


class BudgetError(CapacityError, ValueError):
    """Selection budget exceeds the number of candidates."""


class SequencingError(CtxSelError, ValueError):
    """Segment appended out of order."""


class InvalidSegmentError(NumericError):
    """Generated segment contains non-finite values."""


class ConsistencyError(CtxSelError, RuntimeError):
    """Gradient tape does not match the inputs it is asked to differentiate."""


class CorruptionError(CtxSelError, OSError):
    """Checkpoint or data file is truncated or has a bad header."""


class MigrationError(CtxSelError):
    """Checkpoint written by an unsupported format version."""


class PreconditionError(CtxSelError, ValueError):
    """Caller violated an operation's documented precondition."""


class NoValidPairsError(DomainError):
    """Similarity mask selects no pairs."""
