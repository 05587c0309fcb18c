"""Exception types raised across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class CapacityError(ContractError):
    """A requested structure would be too large to materialize."""


class NumericError(ArithmeticError):
    """A computation produced NaN or infinite values."""


class SchemaError(ContractError):
    """Column names or types do not match the declared schema."""


class DataLoadError(ContractError):
    """A data file could not be parsed."""
