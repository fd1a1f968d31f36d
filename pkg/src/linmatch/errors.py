"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or malformed dimensions."""


class NumericError(ArithmeticError):
    """An operation produced non-finite values."""


class ContractViolation(ValueError):
    """An input broke a documented contract (range, sign, dtype mixing)."""


class EmptyStateError(RuntimeError):
    """Readout requested from a state that has absorbed no frames."""


class GenerationError(ValueError):
    """Synthetic sequence parameters cannot be realized."""


class MemoryCapExceeded(RuntimeError):
    """Predicted allocation exceeds the configured byte cap."""
