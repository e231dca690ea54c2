"""Numerical thermodynamic formalism for interval maps, hyperbolic potentials and contracting skew products."""

from .dynamics import IntervalMap, make_map
from .potentials import Potential, ProductPotential, make_potential
from .transfer_operator import SpectralSolution, build_ulam, power_iterate, pressure, solve

__version__ = "0.1.0"

__all__ = [
    "IntervalMap",
    "Potential",
    "ProductPotential",
    "SpectralSolution",
    "build_ulam",
    "make_map",
    "make_potential",
    "power_iterate",
    "pressure",
    "solve",
]
