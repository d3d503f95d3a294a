"""Moment-fitting quadrature on spline spaces.

Given unisolvent points ``x_k``, the weights solve ``A^T w = b`` with
``b_i = int rho B_i``, so the rule integrates every spline of the space
exactly. Weights can be negative; diagnostics below quantify that.
"""
from dataclasses import dataclass

import numpy as np

from .errors import SingularCollocationError
from .interpolation import chebyshev_spline, collocation_matrix, spline_extrema
from .spline_core import (GeometryMap, as_density, as_space, design_matrix,
                          greville_points, span_quadrature, uniform_knot_vector,
                          SplineSpace)

NEGATIVE_RTOL = 1e-13


@dataclass(frozen=True)
class MomentVector:
    """``b_i = int_Omega rho B_i`` in Kronecker (row-major) ordering."""

    values: np.ndarray
    shape: tuple

    @property
    def total(self):
        """Weighted measure ``I(1) = sum_i b_i``."""
        return float(self.values.sum())

    def __len__(self):
        return self.values.size


def tensor_quadrature(space, geometry=None, n_points=None):
    """Per-direction Gauss grids: list of (parametric nodes, weights, physical nodes)."""
    space = as_space(space)
    geometry = (geometry or GeometryMap.identity(space.dim)).for_dim(space.dim)
    out = []
    for d, kv in enumerate(space.knot_vectors):
        x, w = span_quadrature(kv, n_points)
        out.append((x, w * geometry.scale[d], geometry(d, x)))
    return out


def bspline_moments(space, density=1.0, geometry=None, n_points=None):
    """Exact (for constant density) B-spline moments via per-span Gauss-Legendre.

    ``n_points`` defaults to ``p + 1`` per span, exact up to degree ``2p + 1``.
    """
    space = as_space(space)
    rho = as_density(density)
    grids = tensor_quadrature(space, geometry, n_points)
    Bs = [design_matrix(kv, g[0]) for kv, g in zip(space.knot_vectors, grids)]
    phys = np.meshgrid(*[g[2] for g in grids], indexing="ij")
    wq = np.ones(())
    for g in grids:
        wq = np.multiply.outer(wq, g[1])
    R = rho(*phys) * wq
    # contract each quadrature axis with its basis matrix
    for d, B in enumerate(Bs):
        R = np.moveaxis(R, d, 0)
        lead = R.shape
        R = np.moveaxis((B.T @ R.reshape(lead[0], -1)).reshape((B.shape[1],) + lead[1:]), 0, d)
    values = np.asarray(R).ravel()
    if np.any(values <= 0):
        raise ValueError("nonpositive moment encountered")
    values.setflags(write=False)
    return MomentVector(values, space.shape)


class QuadratureRule:
    """Interpolatory spline quadrature rule with sign and size diagnostics."""

    def __init__(self, points, weights, total, geometry=None):
        self.points = points
        self.weights = np.asarray(weights, dtype=float)
        self.weights.setflags(write=False)
        self.total = float(total)
        self.geometry = geometry

    def __repr__(self):
        return ("QuadratureRule(kind=%s, n=%d, min_weight=%.3g, n_negative=%d)"
                % (self.points.kind, self.weights.size, self.min_weight, self.n_negative))

    @property
    def n(self):
        return self.weights.size

    @property
    def negative_tolerance(self):
        return NEGATIVE_RTOL * self.total

    @property
    def min_weight(self):
        return float(self.weights.min())

    @property
    def n_negative(self):
        return int(np.count_nonzero(self.weights < -self.negative_tolerance))

    @property
    def n_numerically_zero(self):
        w = self.weights
        return int(np.count_nonzero((w >= -self.negative_tolerance) & (w <= 0.0)))

    @property
    def all_positive(self):
        return bool(np.all(self.weights > 0.0))

    @property
    def norm1(self):
        return float(np.abs(self.weights).sum())

    @property
    def weight_sum(self):
        return float(self.weights.sum())

    def nodes(self):
        """Physical quadrature nodes, shape ``(n, dim)``."""
        return self.points.physical(self.geometry)


def moment_fitting_weights(op, b, geometry=None):
    """Solve ``A^T w = b`` directionwise through the Kronecker factors."""
    values = b.values if isinstance(b, MomentVector) else np.asarray(b, dtype=float)
    w = op.solve_transpose(values)
    resid = np.abs(op.rmatvec(w) - values).max() / np.abs(values).max()
    # backward-stable solves leave a residual of order eps * ||A^{-1}||
    if not np.isfinite(resid) or resid > 1e-12 * max(1.0, op.inverse_norm_inf()):
        raise SingularCollocationError("moment-fitting residual %.3g" % resid)
    return QuadratureRule(op.points, w, values.sum(), geometry)


def quadrature_rule(space, points, density=1.0, geometry=None):
    """Collocation, moments and weights in one call."""
    op = collocation_matrix(space, points)
    b = bspline_moments(space, density, geometry)
    return moment_fitting_weights(op, b, geometry), op, b


def apply_quadrature(rule, f):
    """``Q(f) = sum_k w_k f(x_k)``; ``f`` takes one physical coordinate array per direction."""
    X = rule.nodes()
    fx = np.broadcast_to(np.asarray(f(*X.T), dtype=float), (rule.n,))
    return float(rule.weights @ fx)


@dataclass
class PositivityCertificate:
    """Row conditions ``lhs > rhs`` with ties (equal up to roundoff) kept apart.

    ``conditions`` marks rows holding with a margin above roundoff, ``ties``
    rows where both sides agree to roundoff.
    """

    conditions: np.ndarray
    ties: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    upper_bounds: np.ndarray
    weights: np.ndarray

    @property
    def holds(self):
        return bool(self.conditions.all())

    @property
    def holds_weakly(self):
        """Every row satisfies ``lhs >= rhs`` up to roundoff."""
        return bool((self.conditions | self.ties).all())

    @property
    def n_ties(self):
        return int(np.count_nonzero(self.ties))

    @property
    def consistent(self):
        """When the certificate holds the solved weights must obey its bounds."""
        if not self.holds:
            return True
        w = self.weights
        return bool(np.all(w > 0) and np.all(w <= self.upper_bounds * (1 + 1e-12)))


def positivity_certificate(space, points, b):
    """Sufficient positivity test for the moment-fitting weights.

    For every ``i`` checks ``I(B_i) > sum_{j != i} B_i(x_j) / B_j(x_j) I(B_j)``;
    if all hold then ``0 < w_i <= I(B_i) / B_i(x_i)``.
    """
    op = collocation_matrix(space, points)
    At = op.matrix.T  # At[i, j] = B_i(x_j)
    bv = b.values if isinstance(b, MomentVector) else np.asarray(b, dtype=float)
    diag = np.diag(At)
    scaled = At / diag[None, :]
    full = scaled @ bv
    rhs = full - bv  # drop the j == i term (scaled diagonal is 1)
    tol = 64 * np.finfo(float).eps * full
    ties = np.abs(bv - rhs) <= tol
    w = op.solve_transpose(bv)
    cert = PositivityCertificate((bv > rhs) & ~ties, ties, bv.copy(), rhs, bv / diag, w)
    if not cert.consistent:
        raise AssertionError("certificate holds but solved weights violate its bounds")
    return cert


def condition_diagnostics(rule, op, samples_per_span=1024):
    """Sandwich ``I(1) <= ||w||_1 <= ||A^{-1}||_inf I(1)`` and the conjectured bound.

    The conjectured upper bound uses the sup norm of the equioscillating spline
    on the rule's points, sampled with ``samples_per_span`` points per span
    (product of the per-direction norms in several directions).
    """
    I1 = rule.total
    w1 = rule.norm1
    inv_norm = op.inverse_norm_inf()
    cheb = 1.0
    for kv, x in zip(op.space.knot_vectors, op.points.points):
        c = chebyshev_spline(kv, x)
        cheb *= spline_extrema(kv, c, samples_per_span)[2]
    atol = 1e-10
    return {
        "I1": I1,
        "norm_w1": w1,
        "ratio": w1 / I1,
        "inv_norm": inv_norm,
        "cheb_norm": cheb,
        "lower_holds": I1 <= w1 + atol,
        "upper_holds": w1 <= inv_norm * I1 + atol,
        "conjecture_bound": cheb * I1,
        "conjecture_bound_holds": w1 <= cheb * I1 + atol,
    }


def greville_sign_table(degrees=range(1, 13), n_elements=32):
    """Sign of the Greville weights for every feasible (p, k) on a uniform mesh."""
    rows = []
    for p in degrees:
        for k in range(p):
            space = SplineSpace((uniform_knot_vector(n_elements, p, k),))
            rule = quadrature_rule(space, greville_points(space))[0]
            rows.append({"p": p, "k": k, "N": n_elements, "point_kind": "greville",
                         "all_positive": rule.n_negative == 0,
                         "n_negative": rule.n_negative, "min_weight": rule.min_weight})
    return rows
