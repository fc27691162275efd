"""Exception hierarchy shared by the library and the CLI exit-code contract."""


class FormalityError(Exception):
    exit_code = 1


class StructuralError(FormalityError, ValueError):
    """Operands disagree on dimension, truncation order, kind or arity."""


class PreconditionError(FormalityError, ValueError):
    """An operation was called outside its domain."""


class ValidationError(FormalityError, ValueError):
    """Input data (spec file, connection, Poisson structure) is invalid."""


class CapacityError(FormalityError):
    """A requested order or arity exceeds what is implemented or truncated."""

    exit_code = 2


class ConsistencyError(FormalityError):
    """An identity that must hold by construction failed."""

    exit_code = 3
