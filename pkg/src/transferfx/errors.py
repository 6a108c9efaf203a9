"""Exception taxonomy shared across the package.

Two recoverable categories are distinguished so the CLI can map them to
distinct exit codes: problems with requested parameters (ValidationError)
and problems with the data itself (DataError). Anything else is a bug.
"""


class TransferFXError(Exception):
    """Base class for all package-raised errors."""


class ValidationError(TransferFXError):
    """Invalid argument, configuration value, or flag combination."""


class DataError(TransferFXError):
    """Input data violates a documented precondition or file contract."""
