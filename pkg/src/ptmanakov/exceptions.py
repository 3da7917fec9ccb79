"""Exception hierarchy shared across the package."""


class PTManakovError(Exception):
    """Base class for all package errors."""


class InvalidGridError(PTManakovError, ValueError):
    pass


class InvalidParameterError(PTManakovError, ValueError):
    pass


class InvalidInputError(PTManakovError, ValueError):
    pass


class UnsupportedModelError(PTManakovError, ValueError):
    """The requested operation needs a coefficient structure the params lack."""


class ReductionUndefinedError(PTManakovError, ValueError):
    pass


class NoFiniteBoundError(PTManakovError, ValueError):
    """Raised when gamma >= kappa, where the mass has no finite upper bound."""


class OutOfScopeError(PTManakovError, ValueError):
    pass


class SolverFailure(PTManakovError, RuntimeError):
    pass


class ConfigError(PTManakovError, ValueError):
    pass
