"""Hexahedral finite elements with an exact NURBS boundary face.

Boundary-layer elements blend a NURBS surface patch into trilinear interior
elements; the package provides the spline substrate, the mesh and element
maps, the hybrid element space, quadrature rules, interpolation operators
and a Poisson solver with convergence studies.
"""

__version__ = "0.1.0"

from .errors import (
    NefemError,
    DomainError,
    KnotVectorError,
    InvalidPatchError,
    IllConditionedTransformError,
    GeometryError,
    UnsupportedTopologyError,
    WrongElementKindError,
    InvertedElementError,
    PointLocationError,
    QuadratureError,
    DegeneratePointError,
    SurfaceMeasureError,
    SolverError,
    SchemaError,
    NefemWarning,
    NegativeWeightWarning,
    DegenerateDerivativeWarning,
)
from .geometry import ExtrudedDomain, bump_cube, cylinder_sector, flat_cube, preset
from .interpolation import (
    ExtrudedNurbsSpace,
    error_norms,
    global_interpolate,
    hybrid_interpolate,
    lagrange_interpolate,
    nurbs_project,
    spline_interpolate,
)
from .mesh import HybridMesh, build_hierarchy, build_mesh, refine
from .nurbs import NurbsPatch, TransformedPatchBasis, build_transformed_basis
from .quadrature import QuadRule, gauss_legendre, greville_weights, hybrid_points, hybrid_weights
from .solver import ManufacturedSolution, assemble, manufactured_solve, solve
from .spaces import DofMap, FEFunction, HybridLocalBasis, build_dof_map
from .spline import KnotVector, greville_points, insert_knot

__all__ = [
    "__version__",
    "ExtrudedDomain", "bump_cube", "cylinder_sector", "flat_cube", "preset",
    "ExtrudedNurbsSpace", "error_norms", "global_interpolate", "hybrid_interpolate",
    "lagrange_interpolate", "nurbs_project", "spline_interpolate",
    "HybridMesh", "build_hierarchy", "build_mesh", "refine",
    "NurbsPatch", "TransformedPatchBasis", "build_transformed_basis",
    "QuadRule", "gauss_legendre", "greville_weights", "hybrid_points", "hybrid_weights",
    "ManufacturedSolution", "assemble", "manufactured_solve", "solve",
    "DofMap", "FEFunction", "HybridLocalBasis", "build_dof_map",
    "KnotVector", "greville_points", "insert_knot",
    "NefemError", "DomainError", "KnotVectorError", "InvalidPatchError",
    "IllConditionedTransformError", "GeometryError", "UnsupportedTopologyError",
    "WrongElementKindError", "InvertedElementError", "PointLocationError",
    "QuadratureError", "DegeneratePointError", "SurfaceMeasureError", "SolverError",
    "SchemaError", "NefemWarning", "NegativeWeightWarning", "DegenerateDerivativeWarning",
]
