"""Exception types. ``exit_code`` is what the command-line entry point returns."""


class PetsfmError(Exception):
    exit_code = 1


class ConfigError(PetsfmError, ValueError):
    exit_code = 2


class DimensionError(PetsfmError, ValueError):
    exit_code = 2


class DataError(PetsfmError, ValueError):
    exit_code = 3


class CheckpointError(DataError):
    pass


class NumericError(PetsfmError, ArithmeticError):
    exit_code = 4


class GraphError(PetsfmError, RuntimeError):
    """Misuse of the autodiff graph (non-scalar loss, replayed backward...)."""
