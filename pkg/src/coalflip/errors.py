"""Exception types shared across the package."""


class CoalflipError(Exception):
    """Base class for package errors."""


class ArityError(CoalflipError, ValueError):
    """Input length does not match a function's or measure's arity."""


class BudgetError(CoalflipError, RuntimeError):
    """An exact computation would exceed its enumeration budget."""


class PreconditionError(CoalflipError, ValueError):
    """A documented precondition of an operation is violated."""


class DaggerMassError(PreconditionError):
    """The undefined-value mass of a function exceeds its admissible threshold."""


class ConfigError(CoalflipError, ValueError):
    """Invalid experiment configuration."""
