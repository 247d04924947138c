"""Finite-difference solvers for the conformal operator on implicit domains."""
from .field import GridField
from .grid import Grid, build_grid
from .operator import ShiftedSolver, assemble_L, coefficient
from .radial import RadialProfile, radial_oracle
from .solvers import (
    CLAMP_FLOOR,
    HeatTrace,
    elliptic_residual,
    elliptic_solve,
    heat_solve,
    laplace_transform,
    stable_wave_step,
    wave_solve,
)

__all__ = [
    "CLAMP_FLOOR",
    "Grid",
    "GridField",
    "HeatTrace",
    "RadialProfile",
    "ShiftedSolver",
    "assemble_L",
    "build_grid",
    "coefficient",
    "elliptic_residual",
    "elliptic_solve",
    "heat_solve",
    "laplace_transform",
    "radial_oracle",
    "stable_wave_step",
    "wave_solve",
]
