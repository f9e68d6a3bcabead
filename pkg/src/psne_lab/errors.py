"""Exception types shared across the package."""


class PsneLabError(Exception):
    """Base class for every error this package raises on purpose."""


class UsageError(PsneLabError):
    """A documented precondition was violated (bad argument, malformed file)."""


class DomainError(PsneLabError):
    """Inputs are well formed but the operation is undefined for them."""


class CapacityError(PsneLabError):
    """The request exceeds a documented size cap."""
