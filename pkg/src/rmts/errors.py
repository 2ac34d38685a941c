"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: 1 for bad input, 2 for protocol or I/O
trouble, 3 for internal invariant failures.
"""


class RmtsError(Exception):
    exit_code = 3


class InputError(RmtsError):
    """Rejected input: malformed file, invalid value, bad configuration."""

    exit_code = 1


class ContractViolationError(RmtsError):
    """A caller broke an API precondition (e.g. out-of-order frames)."""

    exit_code = 3


class InternalError(RmtsError):
    """An internal invariant failed."""

    exit_code = 3


class ProtocolError(RmtsError):
    """Malformed or unexpected wire data; fatal for the connection."""

    exit_code = 2


class RestoreError(ProtocolError):
    """Checkpoint snapshot is corrupt or has an unknown version."""


class NeedMoreData(Exception):
    """Decoder signal: the buffer does not yet hold a complete message."""
