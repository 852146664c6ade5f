"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """An argument is outside its documented range."""


class DataError(ValueError):
    """Input data is malformed (non-finite entries, empty sets, ...)."""


class ShapeError(ValueError):
    """An array does not have the shape a model or operation expects."""


class ModelFormatError(ValueError):
    """A model file could not be parsed.

    ``offset`` is the character offset of the failure when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class BudgetExhausted(RuntimeError):
    """Raised by a query oracle once its query budget is used up."""

    def __init__(self, budget):
        super().__init__(f"query budget of {budget} exhausted")
        self.budget = budget
