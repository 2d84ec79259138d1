"""
Exception hierarchy shared by the estimator, the flows and the CLI
"""

from typing import Optional


class DineError(Exception):
    """Base class for every error raised by the package"""


class ConfigurationError(DineError, ValueError):
    """Dimension mismatch or malformed configuration"""


class DataError(DineError, ValueError):
    """Malformed, misaligned or non-finite input data"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DomainError(DineError, ValueError):
    """Argument outside the domain of a special function"""


class ContractError(DineError, ValueError):
    """Inputs passed between components do not satisfy their contract"""


class GenerationError(DataError):
    """Synthetic scenario could not be generated"""


class OracleError(DineError, ValueError):
    """Degenerate input to the histogram MI oracle"""


class TrainingError(DineError, RuntimeError):
    """Non-finite objective or gradient during optimization"""

    def __init__(self, message: str, value: Optional[float] = None, epoch: Optional[int] = None):
        super().__init__(message)
        self.value = value
        self.epoch = epoch


class NumericalError(DineError, ArithmeticError):
    """Factorization failure or root-finding non-convergence"""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot
