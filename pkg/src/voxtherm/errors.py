"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class VoxthermError(Exception):
    """Base class."""

    exit_code = 1


class ConfigError(VoxthermError, ValueError):
    """Invalid configuration or usage (CLI exit code 2)."""

    exit_code = 2


class NumericalError(VoxthermError, ArithmeticError):
    """Non-finite values appeared during a computation (CLI exit code 3)."""

    exit_code = 3

    def __init__(self, message, timestep=None):
        super().__init__(message)
        self.timestep = timestep


class FormatError(VoxthermError, OSError):
    """A file could not be read or written in the expected format (exit code 4)."""

    exit_code = 4


class ContractError(VoxthermError, ValueError):
    """A caller violated an operation's precondition."""

    exit_code = 2


class StageError(VoxthermError, RuntimeError):
    """A forecast stage failed; wraps the learner's exception."""

    exit_code = 3

    def __init__(self, stage, cause):
        super().__init__(f"forecast stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
