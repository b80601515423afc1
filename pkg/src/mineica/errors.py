"""Exception taxonomy shared by all modules."""


class MineIcaError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(MineIcaError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(MineIcaError, ValueError):
    """Input values fall outside an operation's numeric domain (e.g. log of
    a non-positive value)."""


class ContractError(MineIcaError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericalError(MineIcaError, ArithmeticError):
    """A computation produced or received non-finite values."""
