"""Exception hierarchy.

Each subclass maps to one CLI exit-code class, so callers can tell a bad
config from a bad file from a solver that did not converge.
"""


class WingbeatError(Exception):
    exit_code = 1


class ConfigError(WingbeatError, ValueError):
    exit_code = 2


class WavError(WingbeatError, OSError):
    """Unreadable WAV file."""

    exit_code = 3


class MalformedWavError(WavError):
    pass


class UnsupportedWavError(WavError):
    pass


class DataContractError(WingbeatError, ValueError):
    """Input data violates a pipeline contract (dimensions, labels, lengths)."""

    exit_code = 4


class ClipTooShortError(DataContractError):
    pass


class DimensionMismatchError(DataContractError):
    pass


class ConvergenceError(WingbeatError, RuntimeError):
    exit_code = 5
