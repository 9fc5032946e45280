"""Exception roots shared across modules.

Each root carries the CLI exit code used when it escapes to the command line.
"""


class VaultError(Exception):
    exit_code = 1


class DeniedError(VaultError):
    """Rejected by the user or refused by an access rule."""

    exit_code = 2


class IntegrityError(VaultError):
    """Authentication, signature, or hash check failed."""

    exit_code = 3


class NotFoundError(VaultError):
    exit_code = 4
