class CamelError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CamelError, ValueError):
    pass


class DomainError(CamelError, ValueError):
    pass


class FitError(CamelError, ValueError):
    pass


class TrainingDivergedError(CamelError, ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss or weights) at epoch {epoch}")
        self.epoch = epoch


class TransferError(CamelError, ValueError):
    pass


class DegenerateVarianceError(CamelError, ValueError):
    pass


class NoneAcceptableError(CamelError):
    """The user rejected every rung of an FPS ladder, including the first."""
