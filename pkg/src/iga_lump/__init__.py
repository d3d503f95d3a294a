"""Interpolatory-spline mass lumping for isogeometric discretizations."""
from .spline_core import (DensityField, GeometryMap, KnotVector, PointSet, SplineSpace,
                          eval_basis, eval_basis_derivative, greville_points,
                          make_open_knot_vector, uniform_knot_vector)
from .interpolation import (CollocationOperator, TruncatedInverse, collocation_matrix,
                            demko_points, interpolate, invert_collocation, truncate_inverse)
from .quadrature import (QuadratureRule, apply_quadrature, bspline_moments,
                         moment_fitting_weights, quadrature_rule)
from .assembly import (LumpedMass, assemble_mass, assemble_stiffness, lagrange_lumped_mass,
                       row_sum_lump)
from .spectral import Spectrum, generalized_eigs, inertia

__version__ = "0.1.0"

__all__ = [
    "DensityField", "GeometryMap", "KnotVector", "PointSet", "SplineSpace", "eval_basis",
    "eval_basis_derivative", "greville_points", "make_open_knot_vector", "uniform_knot_vector",
    "CollocationOperator", "TruncatedInverse", "collocation_matrix", "demko_points",
    "interpolate", "invert_collocation", "truncate_inverse", "QuadratureRule",
    "apply_quadrature", "bspline_moments", "moment_fitting_weights", "quadrature_rule",
    "LumpedMass", "assemble_mass", "assemble_stiffness", "lagrange_lumped_mass", "row_sum_lump",
    "Spectrum", "generalized_eigs", "inertia",
]
