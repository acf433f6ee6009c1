"""Exception types shared by the library and mapped to CLI exit codes."""


class InputError(ValueError):
    """Malformed input: bad JSON, wrong dimension, unknown keys (exit code 2)."""


class PreconditionError(ValueError):
    """An operation's precondition does not hold, e.g. a point outside the body (exit code 3)."""


class CheckFailed(RuntimeError):
    """An internal consistency check failed, e.g. lower bound above upper bound (exit code 4)."""
