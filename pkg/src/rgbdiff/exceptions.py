"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numerical 4), so
library code should raise the most specific one that applies.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, contradictory or out-of-range settings."""


class DataError(ValueError):
    """Invalid input data: unreadable files, shape/channel mismatches, bad manifests."""


class NumericalError(RuntimeError):
    """Numerical failure: divergent training, non-finite values, failed matrix roots."""
