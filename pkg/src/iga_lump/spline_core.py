"""Knot vectors, B-spline evaluation and tensor-product spline spaces.

All spaces live on the parametric domain [0, 1]^d. Physical domains are only
reached through an affine :class:`GeometryMap`.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.sparse


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class KnotVector:
    """Open knot vector on [0, 1] together with a spline degree.

    Parameters
    ----------
    knots : array_like
        Non-decreasing knots. The first and last knot must be repeated exactly
        ``degree + 1`` times and interior knots at most ``degree`` times.
    degree : int
        Spline degree ``p >= 1``.
    """

    def __init__(self, knots, degree):
        knots = _readonly(knots)
        degree = int(degree)
        if degree < 1:
            raise ValueError("degree must be >= 1, got %d" % degree)
        if knots.ndim != 1 or np.any(np.diff(knots) < 0):
            raise ValueError("knots must be a non-decreasing 1D sequence")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("knots must span the parametric domain [0, 1]")
        brk, mult = np.unique(knots, return_counts=True)
        if mult[0] != degree + 1 or mult[-1] != degree + 1:
            raise ValueError("knot vector is not open: boundary knots must be "
                             "repeated degree+1 times")
        if np.any(mult[1:-1] > degree):
            raise ValueError("interior knot multiplicity exceeds the degree")
        self.knots = knots
        self.degree = degree
        self._breakpoints = _readonly(brk)
        self._mult = mult

    def __repr__(self):
        return "KnotVector(p=%d, n=%d, spans=%d)" % (self.degree, self.n, self.n_spans)

    def __eq__(self, other):
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and np.array_equal(self.knots, other.knots))

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))

    @property
    def p(self):
        return self.degree

    @property
    def n(self):
        """Dimension of the spline space."""
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self):
        return self._breakpoints

    @property
    def n_spans(self):
        return self._breakpoints.size - 1

    @property
    def interior_multiplicities(self):
        return self._mult[1:-1].copy()

    @property
    def smoothness(self):
        """Continuity ``p - m`` at every interior breakpoint."""
        return self.degree - self._mult[1:-1]

    def span_indices(self):
        """Knot indices ``i`` of the nonempty spans ``[t[i], t[i+1])``."""
        t = self.knots
        return np.nonzero(t[1:] > t[:-1])[0]

    def find_span(self, x):
        """Knot span index for each ``x``; x = 1 falls in the last nonempty span."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
            raise ValueError("evaluation point outside the parametric domain [0, 1]")
        span = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(span, self.degree, self.n - 1)

    def support(self, i):
        return self.knots[i], self.knots[i + self.degree + 1]


def make_open_knot_vector(breakpoints, degree, smoothness=None):
    """Open knot vector with uniform interior continuity ``C^smoothness``.

    ``smoothness`` defaults to ``degree - 1`` (maximal smoothness).
    """
    brk = np.asarray(breakpoints, dtype=float)
    degree = int(degree)
    if brk.ndim != 1 or brk.size < 2:
        raise ValueError("at least two breakpoints are required")
    if brk[0] != 0.0 or brk[-1] != 1.0 or np.any(np.diff(brk) <= 0):
        raise ValueError("breakpoints must be strictly increasing from 0 to 1")
    if smoothness is None:
        smoothness = degree - 1
    smoothness = int(smoothness)
    if not 0 <= smoothness <= degree - 1:
        raise ValueError("smoothness %d out of range [0, %d]" % (smoothness, degree - 1))
    m = degree - smoothness
    knots = np.concatenate([np.zeros(degree + 1), np.repeat(brk[1:-1], m),
                            np.ones(degree + 1)])
    return KnotVector(knots, degree)


def uniform_knot_vector(n_elements, degree, smoothness=None):
    return make_open_knot_vector(np.linspace(0.0, 1.0, n_elements + 1), degree, smoothness)


@dataclass(frozen=True, eq=False)
class SplineSpace:
    """Tensor product of univariate spline spaces (one knot vector per direction)."""

    knot_vectors: tuple

    def __post_init__(self):
        kvs = self.knot_vectors
        if isinstance(kvs, KnotVector):
            kvs = (kvs,)
        kvs = tuple(kvs)
        if not kvs or not all(isinstance(kv, KnotVector) for kv in kvs):
            raise TypeError("SplineSpace needs one or more KnotVector instances")
        object.__setattr__(self, "knot_vectors", kvs)

    @classmethod
    def uniform(cls, n_elements, degree, smoothness=None, dim=1):
        kv = uniform_knot_vector(n_elements, degree, smoothness)
        return cls((kv,) * dim)

    @property
    def dim(self):
        return len(self.knot_vectors)

    @property
    def shape(self):
        return tuple(kv.n for kv in self.knot_vectors)

    @property
    def n(self):
        return int(np.prod(self.shape))

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def smoothness(self):
        return tuple(kv.smoothness for kv in self.knot_vectors)

    def __getitem__(self, i):
        return self.knot_vectors[i]

    def __repr__(self):
        return "SplineSpace(%s)" % ", ".join(repr(kv) for kv in self.knot_vectors)


def as_knot_vector(space):
    """Return the single knot vector of a univariate space."""
    if isinstance(space, KnotVector):
        return space
    if isinstance(space, SplineSpace) and space.dim == 1:
        return space.knot_vectors[0]
    raise ValueError("a univariate space is required here")


def as_space(space):
    if isinstance(space, SplineSpace):
        return space
    if isinstance(space, KnotVector):
        return SplineSpace((space,))
    raise TypeError("expected SplineSpace or KnotVector, got %r" % type(space))


@dataclass(frozen=True)
class GeometryMap:
    """Separable affine map ``x_d = offset_d + scale_d * xhat_d``."""

    scale: tuple = (1.0,)
    offset: tuple = (0.0,)

    def __post_init__(self):
        scale = tuple(float(s) for s in np.atleast_1d(self.scale))
        offset = tuple(float(o) for o in np.atleast_1d(self.offset))
        if len(offset) == 1 and len(scale) > 1:
            offset = offset * len(scale)
        if len(scale) != len(offset):
            raise ValueError("scale and offset must have the same length")
        if any(s <= 0 for s in scale):
            raise ValueError("Jacobian determinant must be strictly positive")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def identity(cls, dim=1):
        return cls((1.0,) * dim, (0.0,) * dim)

    def for_dim(self, dim):
        if len(self.scale) == dim:
            return self
        if len(self.scale) == 1:
            return GeometryMap(self.scale * dim, self.offset * dim)
        raise ValueError("geometry has %d directions, space has %d" % (len(self.scale), dim))

    @property
    def jacobian_det(self):
        return float(np.prod(self.scale))

    def __call__(self, d, xhat):
        """Map parametric coordinates along direction ``d``."""
        return self.offset[d] + self.scale[d] * np.asarray(xhat)


class DensityField:
    """Positive density: either a constant or a callable of physical coordinates."""

    def __init__(self, value=1.0):
        if callable(value):
            self.value = value
            self.is_constant = False
        else:
            value = float(value)
            if not value > 0:
                raise ValueError("density must be strictly positive")
            self.value = value
            self.is_constant = True

    def __call__(self, *x):
        if self.is_constant:
            return np.full(np.broadcast(*x).shape, self.value)
        out = np.asarray(self.value(*x), dtype=float)
        if np.any(out <= 0):
            raise ValueError("density must be strictly positive on the domain")
        return np.broadcast_to(out, np.broadcast(*x).shape)

    def __repr__(self):
        return "DensityField(%r)" % (self.value,)


def as_density(rho):
    return rho if isinstance(rho, DensityField) else DensityField(rho)


def _basis_table(kv, span, x):
    """Cox-de Boor triangle; ``tab[q]`` holds the q+1 active degree-q values."""
    t = kv.knots
    p = kv.degree
    m = x.size
    tab = [np.ones((m, 1))]
    left = np.empty((m, p + 1))
    right = np.empty((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        prev = tab[-1]
        cur = np.zeros((m, j + 1))
        saved = np.zeros(m)
        for r in range(j):
            temp = prev[:, r] / (right[:, r + 1] + left[:, j - r])
            cur[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        cur[:, j] = saved
        tab.append(cur)
    return tab


def _derivs(kv, span, tab, q, r):
    """r-th derivatives of the q+1 active degree-q functions."""
    if r == 0:
        return tab[q]
    if r > q:
        return np.zeros((span.size, q + 1))
    t = kv.knots
    lower = _derivs(kv, span, tab, q - 1, r - 1)
    out = np.zeros((span.size, q + 1))
    for a in range(q + 1):
        i = span - q + a
        if a >= 1:
            out[:, a] += q / (t[i + q] - t[i]) * lower[:, a - 1]
        if a <= q - 1:
            out[:, a] -= q / (t[i + q + 1] - t[i + 1]) * lower[:, a]
    return out


def _eval(kv, x, order):
    x = np.asarray(x, dtype=float)
    xs = np.atleast_1d(x).ravel()
    span = kv.find_span(xs)
    p = kv.degree
    tab = _basis_table(kv, span, xs)
    vals = _derivs(kv, span, tab, p, order)
    first = span - p
    if x.ndim == 0:
        return int(first[0]), vals[0]
    return first.reshape(x.shape), vals.reshape(x.shape + (p + 1,))


def eval_basis(space, x):
    """Active B-splines at ``x``.

    Returns ``(first, values)`` where ``values[..., j]`` is ``B_{first+j}(x)``
    (0-based indices). Works for scalar or array ``x``.
    """
    return _eval(as_knot_vector(space), x, 0)


def eval_basis_derivative(space, x, order=1):
    """Derivatives of order ``order`` of the active B-splines at ``x``."""
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    return _eval(as_knot_vector(space), x, int(order))


def design_matrix(space, x, order=0):
    """Sparse ``len(x) x n`` matrix of basis (derivative) values at ``x``."""
    kv = as_knot_vector(space)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    first, vals = _eval(kv, x, order)
    p = kv.degree
    rows = np.repeat(np.arange(x.size), p + 1)
    cols = (first[:, None] + np.arange(p + 1)).ravel()
    return scipy.sparse.csr_matrix((vals.ravel(), (rows, cols)), shape=(x.size, kv.n))


def eval_spline(space, coeffs, x, order=0):
    """Evaluate the univariate spline with B-spline coefficients ``coeffs``."""
    kv = as_knot_vector(space)
    x = np.asarray(x, dtype=float)
    first, vals = _eval(kv, x.ravel(), order)
    idx = first[:, None] + np.arange(kv.degree + 1)
    coeffs = np.asarray(coeffs)
    out = np.einsum("mj,mj...->m...", vals, coeffs[idx])
    return out.reshape(x.shape + coeffs.shape[1:])


class PointSet:
    """Per-direction interpolation points in the parametric domain.

    Points must be strictly increasing with first point 0 and last point 1 in
    every direction. ``kind`` is one of ``greville``, ``demko`` or ``custom``.
    ``unisolvent`` is None until checked against a space.
    """

    KINDS = ("greville", "demko", "custom")

    def __init__(self, points, kind="custom", unisolvent=None):
        if isinstance(points, np.ndarray) and points.ndim == 1:
            points = (points,)
        elif len(points) and np.ndim(points[0]) == 0:
            points = (points,)
        pts = tuple(_readonly(x) for x in points)
        for x in pts:
            if x.ndim != 1 or x.size < 2:
                raise ValueError("each direction needs at least two points")
            if np.any(np.diff(x) <= 0):
                raise ValueError("interpolation points must be strictly increasing")
            if x[0] != 0.0 or x[-1] != 1.0:
                raise ValueError("interpolation points must include both ends 0 and 1")
        if kind not in self.KINDS:
            raise ValueError("unknown point kind %r" % kind)
        self.points = pts
        self.kind = kind
        self.unisolvent = unisolvent

    def __repr__(self):
        return "PointSet(kind=%s, shape=%s)" % (self.kind, self.shape)

    def __getitem__(self, d):
        return self.points[d]

    @property
    def dim(self):
        return len(self.points)

    @property
    def shape(self):
        return tuple(x.size for x in self.points)

    @property
    def n(self):
        return int(np.prod(self.shape))

    def physical(self, geometry=None):
        """Tensor grid of mapped points, ``(n, dim)`` in Kronecker (row-major) order."""
        geometry = (geometry or GeometryMap.identity(self.dim)).for_dim(self.dim)
        axes = [geometry(d, x) for d, x in enumerate(self.points)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    def to_csv(self, path, direction=0):
        """One value per line with 17 significant digits."""
        np.savetxt(path, self.points[direction], fmt="%.17g")

    @classmethod
    def from_csv(cls, *paths, kind="custom"):
        return cls(tuple(np.atleast_1d(np.loadtxt(p, dtype=float)) for p in paths), kind)


def greville_abscissae(space):
    kv = as_knot_vector(space)
    p = kv.degree
    t = kv.knots
    g = np.array([t[i + 1:i + p + 1].mean() for i in range(kv.n)])
    # symmetric knot vectors give symmetric points up to roundoff; pin the ends
    g[0], g[-1] = 0.0, 1.0
    return g


def gauss_legendre(n_points, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def span_quadrature(space, n_points=None, interval=None):
    """Per-span Gauss-Legendre nodes and weights over the parametric domain.

    Spans are clipped to ``interval`` when given (nodes only inside it).
    """
    kv = as_knot_vector(space)
    if n_points is None:
        n_points = kv.degree + 1
    brk = kv.breakpoints
    if interval is not None:
        a, b = interval
        brk = np.unique(np.clip(np.concatenate([brk, [a, b]]), a, b))
    xs, ws = [], []
    for a, b in zip(brk[:-1], brk[1:]):
        if b > a:
            x, w = gauss_legendre(n_points, a, b)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def greville_points(space):
    """Greville abscissae (knot averages) of every direction as a PointSet."""
    space = as_space(space)
    return PointSet(tuple(greville_abscissae(kv) for kv in space.knot_vectors),
                    kind="greville", unisolvent=True)
