"""Exception hierarchy. Each family maps onto a CLI exit code."""


class RmeError(Exception):
    exit_code = 1


class ConfigError(RmeError, ValueError):
    """Invalid parameters, infeasible requests, missing inputs."""

    exit_code = 2


class DataError(RmeError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, msg, offset=None):
        if offset is not None:
            msg = f"{msg} (at byte offset {offset})"
        super().__init__(msg)
        self.offset = offset


class FormatError(DataError):
    pass


class NumericalAbort(RmeError):
    """Raised when a loss becomes NaN/Inf during training."""

    exit_code = 4

    def __init__(self, msg, step=None):
        super().__init__(msg if step is None else f"{msg} at step {step}")
        self.step = step


class BoundsError(RmeError, IndexError):
    exit_code = 3


class DegenerateInputError(RmeError, ValueError):
    exit_code = 4


class ShapeError(RmeError, ValueError):
    exit_code = 2


class UsageError(RmeError):
    exit_code = 2
