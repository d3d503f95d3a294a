"""Interpolation points, collocation matrices and interpolatory spline bases.

The Lagrange (interpolatory) spline basis ``L_j = sum_k C[k, j] B_k`` is
defined by the inverse ``C`` of the collocation matrix ``A[i, k] = B_k(x_i)``.
In several directions ``A`` is the Kronecker product of univariate factors and
every operation below is carried out factor by factor.
"""
import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import DemkoConvergenceError, SingularCollocationError
from .kron import kron_full, kron_matvec
from .spline_core import (PointSet, as_knot_vector, as_space, design_matrix,
                          eval_spline, greville_abscissae, greville_points)

__all__ = [
    "PointSet", "CollocationOperator", "TruncatedInverse", "greville_points",
    "check_unisolvent", "collocation_matrix", "invert_collocation",
    "truncate_inverse", "demko_points", "chebyshev_spline", "spline_extrema",
    "interpolate", "lagrange_basis",
]

COND_LIMIT = 1e14


def _as_points(points):
    return points if isinstance(points, PointSet) else PointSet(points)


def check_unisolvent(space, points):
    """Schoenberg-Whitney test ``B_i(x_i) > 0`` in every direction.

    Returns ``(flags, ok)`` with one boolean array per direction.
    """
    space = as_space(space)
    points = _as_points(points)
    if points.dim != space.dim:
        raise ValueError("point set has %d directions, space has %d" % (points.dim, space.dim))
    flags = []
    for kv, x in zip(space.knot_vectors, points.points):
        if x.size != kv.n:
            raise ValueError("got %d points for a space of dimension %d" % (x.size, kv.n))
        diag = design_matrix(kv, x).diagonal()
        flags.append(diag > 0.0)
    return flags, all(bool(f.all()) for f in flags)


def _band_limits(A):
    i, j = np.nonzero(A)
    return int(max(0, (i - j).max())), int(max(0, (j - i).max()))


class CollocationOperator:
    """Kronecker product of univariate collocation matrices ``A_d[i, k] = B_k(x_i)``.

    Factors are stored dense (they are small); the full operator is only
    materialised on request through :attr:`matrix`.
    """

    def __init__(self, space, points, factors):
        self.space = space
        self.points = points
        self.factors = tuple(factors)
        self.bandwidths = tuple(_band_limits(A) for A in self.factors)
        self._inverse = None

    @property
    def n(self):
        return int(np.prod([A.shape[0] for A in self.factors]))

    @property
    def matrix(self):
        return kron_full(self.factors)

    @property
    def inverse_factors(self):
        if self._inverse is None:
            self._inverse = invert_collocation(self)
        return self._inverse

    @property
    def inverse(self):
        """Dense ``C = A^{-1}``."""
        return kron_full(self.inverse_factors)

    def matvec(self, x):
        return kron_matvec(self.factors, x)

    def rmatvec(self, x):
        return kron_matvec(self.factors, x, transpose=True)

    def solve(self, f):
        """Coefficients ``alpha`` with ``A alpha = f``."""
        return kron_matvec(self.inverse_factors, f)

    def solve_transpose(self, b):
        """Solution of ``A^T w = b`` (moment fitting)."""
        return kron_matvec(self.inverse_factors, b, transpose=True)

    def inverse_norm_inf(self):
        """``||A^{-1}||_inf``; a Kronecker product has the product of factor norms."""
        return float(np.prod([np.abs(C).sum(axis=1).max() for C in self.inverse_factors]))


def collocation_matrix(space, points):
    space = as_space(space)
    points = _as_points(points)
    flags, ok = check_unisolvent(space, points)
    if not ok:
        bad = [np.nonzero(~f)[0].tolist() for f in flags]
        raise SingularCollocationError("points are not unisolvent; failing indices %s" % bad)
    points.unisolvent = True
    factors = [design_matrix(kv, x).toarray() for kv, x in zip(space.knot_vectors, points.points)]
    return CollocationOperator(space, points, factors)


def _invert_banded(A):
    n = A.shape[0]
    lo, up = _band_limits(A)
    ab = np.zeros((lo + up + 1, n))
    for k in range(-lo, up + 1):
        d = np.diagonal(A, k)
        if k >= 0:
            ab[up - k, k:] = d
        else:
            ab[up - k, :n + k] = d
    try:
        C = scipy.linalg.solve_banded((lo, up), ab, np.eye(n), check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularCollocationError("singular collocation factor: %s" % exc) from None
    return C


def invert_collocation(op):
    """Dense per-direction inverses ``C_d = A_d^{-1}``.

    Raises SingularCollocationError when the condition number (``||C_d||_inf``
    since ``||A_d||_inf = 1``) exceeds 1e14 or the residual check fails.
    """
    out = []
    for A in op.factors:
        C = _invert_banded(A)
        if not np.all(np.isfinite(C)):
            raise SingularCollocationError("collocation inverse is not finite")
        cond = np.abs(C).sum(axis=1).max() * np.abs(A).sum(axis=1).max()
        if cond > COND_LIMIT:
            raise SingularCollocationError("collocation factor numerically singular "
                                           "(condition estimate %.3g)" % cond)
        resid = np.abs(A @ C - np.eye(A.shape[0])).max()
        if resid > 1e-8 * cond:
            raise SingularCollocationError("inversion breakdown, residual %.3g" % resid)
        C.setflags(write=False)
        out.append(C)
    return tuple(out)


class TruncatedInverse:
    """Sparse per-direction approximations of ``C_d`` with entries below ``eps`` dropped."""

    def __init__(self, factors, eps):
        self.factors = tuple(factors)
        self.eps = eps
        self.bandwidths = tuple(_sparse_bandwidth(F) for F in self.factors)
        self.fill_ratios = tuple(F.nnz / float(F.shape[0] * F.shape[1]) for F in self.factors)

    @property
    def n(self):
        return int(np.prod([F.shape[0] for F in self.factors]))

    @property
    def fill_ratio(self):
        return float(np.prod(self.fill_ratios))

    @property
    def matrix(self):
        return kron_full(self.factors, sparse=True)

    def matvec(self, x):
        return kron_matvec(self.factors, x)

    def rmatvec(self, x):
        return kron_matvec(self.factors, x, transpose=True)


def _sparse_bandwidth(F):
    F = F.tocoo()
    if F.nnz == 0:
        return 0
    return int(np.abs(F.row - F.col).max())


def truncate_inverse(C, eps):
    """Drop entries with ``|c| < eps`` from each factor of ``C``.

    ``C`` is a dense matrix, a tuple of per-direction factors or a
    :class:`CollocationOperator`. Each truncated factor is LU-factorised to
    confirm it is still invertible.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("truncation tolerance must lie in (0, 1)")
    if isinstance(C, CollocationOperator):
        C = C.inverse_factors
    if isinstance(C, np.ndarray):
        C = (C,)
    out = []
    for Cd in C:
        Cd = np.asarray(Cd)
        Cbar = scipy.sparse.csc_matrix(np.where(np.abs(Cd) < eps, 0.0, Cd))
        try:
            lu = scipy.sparse.linalg.splu(Cbar)
        except RuntimeError as exc:
            raise SingularCollocationError("truncated inverse is singular (eps=%g): %s"
                                           % (eps, exc)) from None
        udiag = np.abs(lu.U.diagonal())
        if udiag.min() <= 1e-14 * udiag.max():
            raise SingularCollocationError("truncated inverse is numerically singular (eps=%g)" % eps)
        out.append(Cbar.tocsr())
    return TruncatedInverse(out, eps)


def lagrange_basis(space, C, x):
    """Values ``L_j(x)`` of the univariate interpolatory basis, shape ``(len(x), n)``."""
    B = design_matrix(space, x)
    if isinstance(C, TruncatedInverse):
        C = C.factors[0]
    return np.asarray(B @ C) if not scipy.sparse.issparse(C) else (B @ C).toarray()


def chebyshev_spline(space, points):
    """Coefficients of the spline ``s`` with ``s(x_i) = (-1)^i`` (first value +1)."""
    kv = as_knot_vector(space)
    x = points[0] if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    A = design_matrix(kv, x).toarray()
    signs = (-1.0) ** np.arange(kv.n)
    try:
        return scipy.linalg.solve(A, signs)
    except np.linalg.LinAlgError:
        raise SingularCollocationError("singular collocation matrix") from None


def _sample_grid(kv, per_span):
    brk = kv.breakpoints
    u = np.linspace(0.0, 1.0, per_span + 1)[:-1]
    grid = (brk[:-1, None] + np.diff(brk)[:, None] * u).ravel()
    return np.append(grid, 1.0)


def spline_extrema(space, coeffs, samples_per_span=64):
    """Locate one extremum of ``|s|`` between consecutive sign changes of ``s``.

    The first and last extrema are pinned to 0 and 1. Interior extrema are
    bracketed on a sampling grid around the largest sample, then refined by
    bisection on ``s'`` when it changes sign inside the bracket and by
    golden-section search of ``|s|`` otherwise. Returns
    ``(abscissae, values, sup_norm)``.
    """
    kv = as_knot_vector(space)
    grid = _sample_grid(kv, samples_per_span)
    s = eval_spline(kv, coeffs, grid)
    pos = s >= 0.0
    change = np.nonzero(pos[1:] != pos[:-1])[0]
    bounds = np.concatenate([[0], change + 1, [grid.size]])
    best = np.array([a + int(np.argmax(np.abs(s[a:b])))
                     for a, b in zip(bounds[1:-2], bounds[2:-1])], dtype=int)
    lo = grid[np.maximum(best - 1, 0)]
    hi = grid[np.minimum(best + 1, grid.size - 1)]
    inner = _refine_extrema(kv, coeffs, lo, hi)
    ext = np.concatenate([[0.0], inner, [1.0]]) if bounds.size > 2 else np.array([0.0])
    vals = eval_spline(kv, coeffs, ext)
    sup = max(np.abs(vals).max(), np.abs(s).max())
    return ext, vals, float(sup)


_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _refine_extrema(kv, coeffs, lo, hi):
    lo, hi = lo.copy(), hi.copy()
    if lo.size == 0:
        return lo
    d_lo = eval_spline(kv, coeffs, lo, order=1)
    d_hi = eval_spline(kv, coeffs, hi, order=1)
    root = d_lo * d_hi < 0
    out = np.empty_like(lo)
    if root.any():
        a, b, da = lo[root], hi[root], d_lo[root]
        for _ in range(60):
            m = 0.5 * (a + b)
            dm = eval_spline(kv, coeffs, m, order=1)
            left = np.sign(dm) == np.sign(da)
            a = np.where(left, m, a)
            da = np.where(left, dm, da)
            b = np.where(left, b, m)
        out[root] = 0.5 * (a + b)
    gs = ~root
    if gs.any():
        a, b = lo[gs], hi[gs]
        c = b - _GOLD * (b - a)
        d = a + _GOLD * (b - a)
        for _ in range(80):
            fc = np.abs(eval_spline(kv, coeffs, c))
            fd = np.abs(eval_spline(kv, coeffs, d))
            keep_left = fc > fd
            b = np.where(keep_left, d, b)
            a = np.where(keep_left, a, c)
            c = b - _GOLD * (b - a)
            d = a + _GOLD * (b - a)
        cand = np.stack([lo[gs], hi[gs], 0.5 * (a + b)])
        vals = np.abs(eval_spline(kv, coeffs, cand.ravel())).reshape(cand.shape)
        out[gs] = cand[np.argmax(vals, axis=0), np.arange(cand.shape[1])]
    # extrema at kinks: bisection stops an ulp away from the knot, so compare
    brk = kv.breakpoints
    idx = np.clip(np.searchsorted(brk, out), 1, brk.size - 1)
    cand = np.stack([out, np.clip(brk[idx - 1], lo, hi), np.clip(brk[idx], lo, hi)])
    vals = np.abs(eval_spline(kv, coeffs, cand.ravel())).reshape(cand.shape)
    return cand[np.argmax(vals, axis=0), np.arange(cand.shape[1])]


def demko_points(space, tol=1e-10, max_iter=100, samples_per_span=64):
    """Demko (Chebyshev-Demko) points of each direction.

    Starting from the Greville abscissae, the points are repeatedly replaced by
    the extremum abscissae of the spline interpolating ``(-1)^i``, until that
    spline has sup norm at most ``1 + tol``.
    """
    if not 0.0 < tol <= 1e-2:
        raise ValueError("tolerance must lie in (0, 1e-2]")
    space = as_space(space)
    pts = tuple(_demko_1d(kv, tol, max_iter, samples_per_span) for kv in space.knot_vectors)
    return PointSet(pts, kind="demko", unisolvent=True)


def _demko_1d(kv, tol, max_iter, per_span):
    x = greville_abscissae(kv)
    for _ in range(max_iter):
        c = chebyshev_spline(kv, x)
        ext, vals, sup = spline_extrema(kv, c, per_span)
        if ext.size != kv.n:
            raise DemkoConvergenceError("found %d extrema for a space of dimension %d"
                                        % (ext.size, kv.n))
        if sup <= 1.0 + tol:
            return x
        if np.any(np.diff(ext) <= 0):
            raise DemkoConvergenceError("extrema coalesced during the iteration")
        x = ext
    raise DemkoConvergenceError("no convergence after %d iterations (||s|| - 1 = %.3g)"
                                % (max_iter, sup - 1.0))


def interpolate(space, points, f, op=None):
    """B-spline coefficients of the interpolant of ``f`` at ``points``.

    ``f`` takes one array per direction (tensor grid, ``indexing='ij'``).
    """
    space = as_space(space)
    points = _as_points(points)
    if op is None:
        op = collocation_matrix(space, points)
    grid = np.meshgrid(*points.points, indexing="ij")
    fx = np.broadcast_to(np.asarray(f(*grid), dtype=float), grid[0].shape).ravel()
    return op.solve(fx)
