"""Consistent mass/stiffness matrices and diagonal mass approximations.

Matrices are returned dense (``numpy.ndarray``) below ``DENSE_LIMIT`` degrees
of freedom and as CSR sparse matrices above it.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .interpolation import CollocationOperator, TruncatedInverse
from .kron import kron_full, kron_matvec
from .spline_core import GeometryMap, as_density, as_space, design_matrix, span_quadrature

DENSE_LIMIT = 512


def _finish(S, n):
    S = scipy.sparse.csr_matrix(S)
    S = (S + S.T) * 0.5  # remove roundoff asymmetry
    return S.toarray() if n < DENSE_LIMIT else S.tocsr()


def _factor_matrices(kv, n_points=None):
    x, w = span_quadrature(kv, n_points)
    B = design_matrix(kv, x)
    D = design_matrix(kv, x, order=1)
    Wq = scipy.sparse.diags(w)
    return B.T @ Wq @ B, D.T @ Wq @ D


def _tensor_forms(space, coeff, geometry, n_points, derivative_dir):
    """``sum_q c(x_q) w_q Phi_i(x_q) Phi_j(x_q)`` with ``Phi`` differentiated along ``derivative_dir``."""
    grids, mats = [], []
    for d, kv in enumerate(space.knot_vectors):
        x, w = span_quadrature(kv, n_points)
        grids.append((geometry(d, x), w))
        mats.append(design_matrix(kv, x, order=1 if d == derivative_dir else 0))
    phys = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wq = np.ones(())
    for g in grids:
        wq = np.multiply.outer(wq, g[1])
    vals = (coeff(*phys) * wq).ravel()
    Phi = kron_full(mats, sparse=True)
    return Phi.T @ scipy.sparse.diags(vals) @ Phi


def assemble_mass(space, density=1.0, geometry=None, n_points=None):
    """Consistent mass ``M_ij = int rho B_i B_j`` by per-span Gauss-Legendre (p+1 points)."""
    space = as_space(space)
    rho = as_density(density)
    geometry = (geometry or GeometryMap.identity(space.dim)).for_dim(space.dim)
    J = geometry.jacobian_det
    if rho.is_constant:
        factors = [_factor_matrices(kv, n_points)[0] for kv in space.knot_vectors]
        S = rho.value * J * kron_full(factors, sparse=True)
    else:
        S = J * _tensor_forms(space, rho, geometry, n_points, None)
    return _finish(S, space.n)


def dirichlet_free_dofs(space):
    """Boolean mask of coefficients not attached to the boundary."""
    space = as_space(space)
    masks = []
    for kv in space.knot_vectors:
        m = np.ones(kv.n, dtype=bool)
        m[[0, -1]] = False
        masks.append(m)
    out = masks[0]
    for m in masks[1:]:
        out = np.logical_and.outer(out, m).ravel()
    return out


def free_dof_mask(space, bc=None):
    """Resolve ``bc`` ('neumann', 'dirichlet', None or an explicit mask) to a free-DOF mask."""
    space = as_space(space)
    if bc is None or (isinstance(bc, str) and bc == "neumann"):
        mask = np.ones(space.n, dtype=bool)
    elif isinstance(bc, str) and bc == "dirichlet":
        mask = dirichlet_free_dofs(space)
    elif isinstance(bc, str):
        raise ValueError("unknown boundary condition %r" % bc)
    else:
        mask = np.asarray(bc, dtype=bool)
        if mask.shape != (space.n,):
            raise ValueError("mask has wrong length")
    if not mask.any():
        raise ValueError("no degrees of freedom left after constraints")
    return mask


def restrict(M, mask):
    """Principal submatrix on the free DOFs (dense, sparse or diagonal input)."""
    if isinstance(M, LumpedMass):
        return LumpedMass(M.diagonal[mask], M.kind)
    if scipy.sparse.issparse(M):
        idx = np.flatnonzero(mask)
        return M.tocsr()[idx][:, idx]
    return np.asarray(M)[np.ix_(mask, mask)]


def assemble_stiffness(space, kappa=1.0, geometry=None, bc=None, n_points=None):
    """Stiffness ``K_ij = int kappa grad B_i . grad B_j``, restricted to the free DOFs of ``bc``."""
    space = as_space(space)
    kap = as_density(kappa)
    geometry = (geometry or GeometryMap.identity(space.dim)).for_dim(space.dim)
    mask = free_dof_mask(space, bc)
    J = geometry.jacobian_det
    S = 0
    if kap.is_constant:
        pairs = [_factor_matrices(kv, n_points) for kv in space.knot_vectors]
        for d in range(space.dim):
            facs = [pairs[e][1] if e == d else pairs[e][0] for e in range(space.dim)]
            S = S + kap.value * J / geometry.scale[d] ** 2 * kron_full(facs, sparse=True)
    else:
        for d in range(space.dim):
            S = S + J / geometry.scale[d] ** 2 * _tensor_forms(space, kap, geometry, n_points, d)
    return restrict(_finish(S, space.n), mask)


@dataclass(frozen=True)
class LumpedMass:
    """Diagonal mass approximation tagged with the operator that produced it."""

    diagonal: np.ndarray
    kind: str

    def __post_init__(self):
        d = np.array(self.diagonal, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "diagonal", d)

    @property
    def n(self):
        return self.diagonal.size

    @property
    def n_negative(self):
        return int(np.count_nonzero(self.diagonal < 0))

    @property
    def is_positive(self):
        return bool(np.all(self.diagonal > 0))

    @property
    def trace(self):
        return float(self.diagonal.sum())

    def matrix(self):
        return np.diag(self.diagonal)

    def __matmul__(self, x):
        x = np.asarray(x)
        return self.diagonal.reshape((-1,) + (1,) * (x.ndim - 1)) * x


def _as_array(M):
    return M.toarray() if scipy.sparse.issparse(M) else np.asarray(M, dtype=float)


def row_sum_lump(M):
    return LumpedMass(np.asarray(M.sum(axis=1)).ravel(), "row_sum")


def abs_row_sum_lump(M):
    return LumpedMass(np.asarray(abs(M).sum(axis=1)).ravel(), "abs_row_sum")


def diagonal_scaling_lump(M, total_mass):
    """``beta * diag(M)`` with one patch-wide ``beta = total_mass / trace(M)``."""
    if not total_mass > 0:
        raise ValueError("total mass must be positive")
    d = np.asarray(M.diagonal()).ravel().astype(float)
    tr = d.sum()
    if tr == 0:
        raise ValueError("zero trace")
    return LumpedMass(d * (total_mass / tr), "diag_scaling")


def change_basis(M, P):
    """Congruence ``P^T M P``."""
    P = _as_array(P)
    M = _as_array(M)
    if M.shape[0] != M.shape[1] or P.shape[0] != M.shape[0]:
        raise ValueError("dimension mismatch: M %s, P %s" % (M.shape, P.shape))
    out = P.T @ M @ P
    return (out + out.T) * 0.5


def lagrange_lumped_mass(rule):
    """Row-sum lumped mass in the interpolatory basis: the quadrature weights themselves."""
    return LumpedMass(rule.weights, "lagrange_weights")


def quadrature_mass(op, rule):
    """``(A^T W A)_ij = sum_k w_k B_i(x_k) B_j(x_k)``."""
    A = op.matrix
    out = A.T @ (rule.weights[:, None] * A)
    return (out + out.T) * 0.5


def _apply_basis(C, x, transpose=False):
    if isinstance(C, CollocationOperator):
        return kron_matvec(C.inverse_factors, x, transpose)
    if isinstance(C, TruncatedInverse):
        return C.rmatvec(x) if transpose else C.matvec(x)
    if isinstance(C, (tuple, list)):
        return kron_matvec(C, x, transpose)
    return (C.T @ x) if transpose else (C @ x)


def apply_lagrange_stiffness(Kb, C, x):
    """``C^T (K_B (C x))`` applied right to left without forming ``C^T K_B C``.

    ``C`` may be a CollocationOperator, a TruncatedInverse, a tuple of
    per-direction factors or a matrix.
    """
    return _apply_basis(C, Kb @ _apply_basis(C, x), transpose=True)


def export_coo(M, path):
    """Write ``row col value`` lines (0-based) for external checks."""
    if isinstance(M, LumpedMass):
        S = scipy.sparse.diags(M.diagonal).tocoo()
    else:
        S = scipy.sparse.coo_matrix(M)
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(S.row, S.col, S.data):
            fh.write("%d %d %.17g\n" % (i, j, v))
