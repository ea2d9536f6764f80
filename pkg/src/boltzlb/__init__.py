"""Numerical toolkit for the non-cutoff Boltzmann collision operator.

Evaluates the collision operator in the sigma representation and in the
Carleman (kernel) representation, constructs explicit comparison barriers,
runs the doubly-geometric lower-bound spreading iteration to produce
Gaussian envelope certificates, and drives a desk-scale kinetic solver
against which those certificates are checked.
"""

from .core import (
    ConstantsRegistry,
    HydroBounds,
    KernelParams,
    PhaseField,
    SpatialGrid,
    VelocityGrid,
    check_mass_core,
    check_well_distributed,
    lp_norm,
    moment_weighted,
)

__all__ = [
    "KernelParams",
    "VelocityGrid",
    "SpatialGrid",
    "PhaseField",
    "HydroBounds",
    "ConstantsRegistry",
    "moment_weighted",
    "lp_norm",
    "check_mass_core",
    "check_well_distributed",
]

__version__ = "0.1.0"
