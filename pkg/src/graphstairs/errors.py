"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in cli.py; library code only raises.
"""


class GraphStairsError(Exception):
    """Base class for all package errors."""


class ShapeError(GraphStairsError):
    """Operand shapes violate an operation's shape rule."""


class NumericError(GraphStairsError):
    """Non-finite values, invalid domains (log of <=0), or aborted training steps."""


class ContractError(GraphStairsError):
    """A documented precondition was violated by the caller."""


class ConvergenceError(GraphStairsError):
    """An iterative solver exhausted its iteration budget."""


class ConfigError(GraphStairsError):
    """Invalid run configuration or config file."""


class DataFormatError(GraphStairsError):
    """Malformed on-disk dataset (bad CSV cell, wrong dimensions, missing files)."""
