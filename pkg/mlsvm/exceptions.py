from typing import Any, Optional


class MLSVMError(Exception):
    """Base class for exceptions in MLSVM."""
    pass

class DataFormatError(MLSVMError):
    """Raised when an input line cannot be parsed.

    Attributes:
        line_no (Optional[int]): 1-based line number of the offending line.
    """

    def __init__(self, message: str, line_no: Optional[int] = None) -> None:
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no

class DomainError(MLSVMError):
    """Raised when the label set or class composition is unusable."""
    pass

class ValidationError(MLSVMError):
    """Raised when a parameter or configuration value is invalid."""
    pass

class DimensionMismatchError(ValidationError):
    """Raised when feature counts disagree."""
    pass

class GraphError(MLSVMError):
    """Raised when an affinity graph cannot be built."""
    pass

class InvariantError(MLSVMError):
    """Raised when an internal invariant is breached."""
    pass

class SolverError(MLSVMError):
    """Raised when the dual solver fails."""
    pass

class ConvergenceError(SolverError):
    """Raised when SMO hits its iteration limit.

    Attributes:
        best_model (Any): Model assembled from the last iterate.
    """

    def __init__(self, message: str, best_model: Any = None) -> None:
        super().__init__(message)
        self.best_model = best_model

class ModelFileError(MLSVMError):
    """Raised when a model file is corrupt or unreadable."""
    pass

class StorageError(MLSVMError):
    """Raised when an atomic write fails."""
    pass

class ReportBusyError(MLSVMError):
    """Raised when a report lock cannot be acquired within timeout period."""
    pass
