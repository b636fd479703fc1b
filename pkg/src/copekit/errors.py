"""Exception types shared across the package."""


class CopekitError(Exception):
    """Base class for all copekit errors."""


class ValidationError(CopekitError):
    """Bad parameters, incompatible inputs, or violated invariants."""


class DataError(CopekitError):
    """Unusable input data: malformed files, empty signals, missing peaks."""
