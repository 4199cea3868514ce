"""Exact steady state of a Kerr resonator with one- and two-photon driving and loss."""

from .density import DensityMatrix
from .errors import KerrExactError
from .params import ReducedParams, SystemParams, reduce
from .special_functions import DEFAULT_CONTEXT, LogComplex, PrecisionContext

__all__ = [
    "DEFAULT_CONTEXT",
    "DensityMatrix",
    "KerrExactError",
    "LogComplex",
    "PrecisionContext",
    "ReducedParams",
    "SystemParams",
    "reduce",
]

__version__ = "0.1.0"
