"""Error taxonomy shared across the package.

The CLI maps these onto process exit codes, so raising the right kind
matters: ConfigError -> 2, NumericalError -> 3, I/O and checkpoint
problems -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field path."""


class NumericalError(ArithmeticError):
    """Non-finite values or numerically broken state detected."""
