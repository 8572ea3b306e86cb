"""Lumped-element superconducting circuits: netlists, circuit graphs,
Hamiltonians, Fock-space operators, truncation and driven dynamics."""

from . import builder, dynamics, errors, fockspace, graphkit, netlist, truncate
from .errors import InputError, NumericalError, QcircError

__version__ = "0.1.0"

__all__ = [
    "builder",
    "dynamics",
    "errors",
    "fockspace",
    "graphkit",
    "netlist",
    "truncate",
    "InputError",
    "NumericalError",
    "QcircError",
    "__version__",
]
