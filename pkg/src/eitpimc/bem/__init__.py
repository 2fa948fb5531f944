"""Boundary-element reference solver for the electrode problem on the unit sphere."""

from .mesh import GEO_WIDTH, MeshParams, SurfaceMesh, build_global_mesh, build_graded_electrode_mesh, icosphere
from .solver import (
    DenseSystem,
    QuadratureOptions,
    ReferenceSolution,
    SingularSystemError,
    assemble,
    double_layer_row_sums,
    greens_function,
    interior_potential,
    solve,
    solve_reference,
)

__all__ = [
    "GEO_WIDTH",
    "DenseSystem",
    "MeshParams",
    "QuadratureOptions",
    "ReferenceSolution",
    "SingularSystemError",
    "SurfaceMesh",
    "assemble",
    "build_global_mesh",
    "build_graded_electrode_mesh",
    "double_layer_row_sums",
    "greens_function",
    "icosphere",
    "interior_potential",
    "solve",
    "solve_reference",
]
