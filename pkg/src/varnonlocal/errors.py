"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class UnsupportedInputError(ValidationError):
    """The input lacks a capability the operation needs (e.g. an off-grid evaluator)."""


class CapabilityError(ValidationError):
    """A kernel does not satisfy a hypothesis the requested check relies on."""


class NormalizationError(RuntimeError):
    """A kernel normalization integral could not be evaluated."""
