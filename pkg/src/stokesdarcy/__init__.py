"""Finite element solver for the evolutionary coupled Stokes/Darcy problem.

Q2 velocity and hydraulic head, Q1 (or Q1+Q0) pressure, and a three-level
BDF2-type time discretisation on a structured quadrilateral mesh.
"""
from .forms import HydraulicTensor, PhysicalParams, assemble_operators, build_spaces
from .mesh import Geometry, build_structured
from .mms import ManufacturedSolution, ZeroSolution
from .timestep import SchemeConfig, TimeGrid, run

__all__ = [
    "Geometry",
    "HydraulicTensor",
    "ManufacturedSolution",
    "PhysicalParams",
    "SchemeConfig",
    "TimeGrid",
    "ZeroSolution",
    "assemble_operators",
    "build_spaces",
    "build_structured",
    "run",
]
__version__ = "0.1.0"
