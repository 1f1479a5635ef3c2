"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its domain."""


class CapacityError(RuntimeError):
    """A requested computation is too large for the chosen evaluation mode."""
