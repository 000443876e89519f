"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array extents are incompatible with the requested operation."""


class DomainError(ValueError):
    """A scalar argument lies outside the domain of the operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class FormatError(ValueError):
    """A model or config file could not be parsed."""
