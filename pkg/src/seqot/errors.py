"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown config key."""


class DimensionError(ValueError):
    """Array shapes do not agree with the operation's contract."""


class DataError(ValueError):
    """Malformed input data (bad CSV, out-of-range label, zero-norm frame)."""


class NumericalError(RuntimeError):
    """Numerical failure (NaN/Inf) during solving or training.

    The message names the iteration or training step at which the
    failure was detected.
    """
