"""Exception hierarchy shared by all modules."""


class SlowFastError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SlowFastError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(SlowFastError, ValueError):
    """An experiment or simulation configuration is invalid."""


class NoiseDominatedError(SlowFastError):
    """Rate fit refused: some errors are not resolved above Monte Carlo noise."""


class ReplicaAbortError(SlowFastError):
    """Too many replicas diverged (NaN/overflow) during an experiment."""


class OracleFailure(SlowFastError):
    """An oracle check in the oracle suite did not pass."""
