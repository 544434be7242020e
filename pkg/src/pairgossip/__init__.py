"""Gossip protocols for pairwise (U-statistic) estimation and optimization."""

from pairgossip.errors import DataError, NumericError, ParameterError, PreconditionError

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NumericError",
    "ParameterError",
    "PreconditionError",
    "__version__",
]
