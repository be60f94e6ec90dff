"""Exception types shared across the package."""


class VadbError(Exception):
    """Base class for all package errors."""


class DomainError(VadbError, ValueError):
    """A point or curve lies outside the chart domain of a manifold."""


class InputError(VadbError, ValueError):
    """Non-finite or negative numeric input where it is not allowed."""


class UsageError(VadbError, ValueError):
    """An operation was called with incompatible objects."""


class ParameterError(VadbError, ValueError):
    """A family or profile parameter violates its stated range."""


class ConstructionError(VadbError, RuntimeError):
    """A mesh or auxiliary structure could not be built."""


class NumericalRangeError(VadbError, ArithmeticError):
    """A finite-difference stencil would leave the chart."""
