"""Generalized eigenproblems, inertia, CFL estimates and Gauss-Lobatto element checks."""
import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
from numpy.polynomial import legendre as npleg

from .assembly import LumpedMass, assemble_mass, quadrature_mass
from .errors import IndefiniteMassError, IndefinitePairError
from .interpolation import collocation_matrix

EPS = np.finfo(float).eps
N_ANGLES = 128  # theta = j*pi/64, j = 0..127


def _dense(A):
    if isinstance(A, LumpedMass):
        return np.diag(A.diagonal)
    if scipy.sparse.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def _check_symmetric(A, name):
    scale = max(np.abs(A).max(), 1e-300)
    if A.shape[0] != A.shape[1] or np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError("%s must be square and symmetric" % name)


def zero_threshold(*mats):
    n = mats[0].shape[0]
    return n * EPS * max(np.abs(A).sum(axis=0).max() for A in mats)


class Inertia(NamedTuple):
    n_plus: int
    n_minus: int
    n_zero: int


def inertia(A, tau=None):
    """Eigenvalue-sign counts with zero threshold ``tau = n eps ||A||_1`` by default."""
    A = _dense(A)
    _check_symmetric(A, "A")
    ev = np.linalg.eigvalsh(A)
    if tau is None:
        tau = zero_threshold(A)
    return Inertia(int((ev > tau).sum()), int((ev < -tau).sum()), int((np.abs(ev) <= tau).sum()))


@dataclass
class Spectrum:
    """Generalized eigenvalues in ascending order, ``+inf`` for infinite ones.

    ``alpha``/``beta`` are the Rayleigh quotients of the unit eigenvectors
    with respect to ``K`` and ``M``; ``lambda = alpha / beta``.
    """

    eigenvalues: np.ndarray
    classes: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    vectors: np.ndarray = None
    method: str = "cholesky"
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = {c: int(np.count_nonzero(self.classes == c))
                       for c in ("zero", "positive_finite", "negative_finite", "infinite")}

    @property
    def n(self):
        return self.eigenvalues.size

    @property
    def finite(self):
        return self.eigenvalues[np.isfinite(self.eigenvalues)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "lambda", "class"])
            for k, (lam, c) in enumerate(zip(self.eigenvalues, self.classes)):
                w.writerow([k, "%.17g" % lam, c])


def _classify(K, M, U, tau):
    U = U / np.linalg.norm(U, axis=0)
    alpha = np.einsum("ij,ij->j", U, K @ U)
    beta = np.einsum("ij,ij->j", U, M @ U)
    n = alpha.size
    lam = np.empty(n)
    cls = np.empty(n, dtype=object)
    for i in range(n):
        a, b = alpha[i], beta[i]
        if abs(b) <= tau:
            if abs(a) <= tau:
                raise IndefinitePairError("K and M share a near-null vector")
            lam[i], cls[i] = np.inf, "infinite"
        elif abs(a) <= tau:
            lam[i], cls[i] = 0.0, "zero"
        else:
            lam[i] = a / b
            cls[i] = "positive_finite" if lam[i] > 0 else "negative_finite"
    order = np.argsort(lam, kind="stable")
    return lam[order], cls[order].astype(str), alpha[order], beta[order], U[:, order]


def generalized_eigs(K, M, eigenvectors=False):
    """Eigenvalues of ``K u = lambda M u`` for a symmetric pair.

    SPD ``M`` is handled by Cholesky reduction. Otherwise the pair is
    treated as a definite pencil: the angle ``theta = j pi / 64`` making
    ``cos(theta) K + sin(theta) M`` (with both scaled to unit norm) most
    positive definite is used to reduce both matrices to diagonal form
    simultaneously. Eigenvalues of vectors with vanishing ``M``-form are
    reported as ``+inf``.
    """
    K, M = _dense(K), _dense(M)
    _check_symmetric(K, "K")
    _check_symmetric(M, "M")
    if K.shape != M.shape:
        raise ValueError("K and M have different shapes")
    tau = zero_threshold(K, M)
    try:
        scipy.linalg.cholesky(M, lower=True)
        spd = np.linalg.eigvalsh(M)[0] > tau
    except np.linalg.LinAlgError:
        spd = False
    if spd:
        _, U = scipy.linalg.eigh(K, M)
        method = "cholesky"
    else:
        U = _definite_pair_vectors(K, M)
        method = "definite_pair"
    lam, cls, a, b, U = _classify(K, M, U, tau)
    return Spectrum(lam, cls, a, b, U if eigenvectors else None, method)


def _definite_pair_vectors(K, M):
    Kn = K / np.abs(K).max()
    Mn = M / np.abs(M).max()
    best, best_theta = -np.inf, None
    for j in range(N_ANGLES):
        theta = j * np.pi / 64
        low = scipy.linalg.eigh(np.cos(theta) * Kn + np.sin(theta) * Mn, eigvals_only=True,
                                subset_by_index=[0, 0])[0]
        if low > best:
            best, best_theta = low, theta
    if best <= zero_threshold(Kn, Mn):
        raise IndefinitePairError("no positive definite combination cos(t) K + sin(t) M found")
    c, s = np.cos(best_theta), np.sin(best_theta)
    L = scipy.linalg.cholesky(c * Kn + s * Mn, lower=True)
    G = scipy.linalg.solve_triangular(L, scipy.linalg.solve_triangular(L, Kn, lower=True).T,
                                      lower=True)
    H = scipy.linalg.solve_triangular(L, scipy.linalg.solve_triangular(L, Mn, lower=True).T,
                                      lower=True)
    # c G + s H = I, so G and H commute; diagonalize the one with the larger partner coefficient
    target = G if abs(s) >= abs(c) else H
    _, V = np.linalg.eigh((target + target.T) * 0.5)
    return scipy.linalg.solve_triangular(L.T, V, lower=False)


def verify_spectrum_equality(Kb, Mhat_b, Kl, Wl):
    """Largest relative deviation between the nonzero finite eigenvalues of two pencils.

    Raises ValueError when the class counts differ.
    """
    s1 = generalized_eigs(Kb, Mhat_b)
    s2 = generalized_eigs(Kl, Wl)
    if s1.counts != s2.counts:
        raise ValueError("eigenvalue classes differ: %s vs %s" % (s1.counts, s2.counts))
    keep1 = np.isfinite(s1.eigenvalues) & (s1.classes != "zero")
    keep2 = np.isfinite(s2.eigenvalues) & (s2.classes != "zero")
    a, b = s1.eigenvalues[keep1], s2.eigenvalues[keep2]
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.abs(b)))


def cfl_report(K, M):
    """``lambda_max`` of the pencil and the central-difference limit ``2 / sqrt(lambda_max)``.

    For an indefinite or singular mass the time step is undefined and
    ``dt_crit`` is NaN.
    """
    spec = generalized_eigs(K, M)
    definite = spec.counts["negative_finite"] == 0 and spec.counts["infinite"] == 0
    lam_max = float(spec.finite.max()) if spec.finite.size else np.nan
    if not definite or not lam_max > 0:
        return {"lambda_max": lam_max, "dt_crit": np.nan, "definite": False, "counts": spec.counts}
    return {"lambda_max": lam_max, "dt_crit": 2.0 / np.sqrt(lam_max), "definite": True,
            "counts": spec.counts}


def critical_time_step(K, M):
    """``2 / sqrt(lambda_max)``; raises IndefiniteMassError for non-SPD mass."""
    rep = cfl_report(K, M)
    if not rep["definite"]:
        raise IndefiniteMassError("mass is not positive definite; no stable time step: %s"
                                  % rep["counts"])
    return rep["dt_crit"]


@dataclass
class MassDominance:
    holds: bool
    min_eigenvalue: float
    tolerance: float
    witness: np.ndarray


def mass_dominance(Mhat, M):
    """Checks ``Mhat - M >= 0``; the witness is the eigenvector of the smallest eigenvalue."""
    Mhat, M = _dense(Mhat), _dense(M)
    tau = zero_threshold(Mhat, M)
    ev, V = np.linalg.eigh(Mhat - M)
    return MassDominance(bool(ev[0] >= -tau), float(ev[0]), tau, V[:, 0])


def check_sufficient_cfl_condition(rule, space, density=1.0, geometry=None):
    """``Q(s^2) >= I(s^2)`` on the spline space, tested as ``A^T W A - M_B >= 0``.

    The witness is a B-spline coefficient vector of the most violating spline.
    """
    op = collocation_matrix(space, rule.points)
    return mass_dominance(quadrature_mass(op, rule), assemble_mass(space, density, geometry))


# Gauss-Lobatto machinery on the reference element [-1, 1]

@dataclass(frozen=True)
class GaussLobattoRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def q(self):
        return self.nodes.size - 1


def _legendre(k, x):
    return npleg.legval(x, np.eye(k + 1)[k])


def gauss_lobatto(q):
    """``q + 1`` point Gauss-Lobatto rule: ``+-1`` plus the roots of ``P_q'``."""
    if q < 1:
        raise ValueError("q must be at least 1")
    coef = np.eye(q + 1)[q]
    dcoef = npleg.legder(coef)
    inner = np.sort(npleg.legroots(dcoef).real) if q > 1 else np.empty(0)
    d2 = npleg.legder(dcoef)
    for _ in range(3):  # Newton polish
        inner = inner - npleg.legval(inner, dcoef) / npleg.legval(inner, d2)
    x = np.concatenate([[-1.0], inner, [1.0]])
    x = 0.5 * (x - x[::-1])  # exact symmetry
    w = 2.0 / (q * (q + 1) * npleg.legval(x, coef) ** 2)
    return GaussLobattoRule(x, w)


def legendre_norms(q):
    """Continuous norms ``g_k = ||P_k||^2`` (k = 0..q) and the discrete Lobatto norm ``gamma_q``."""
    g = 2.0 / (2.0 * np.arange(q + 1) + 1.0)
    rule = gauss_lobatto(q)
    gamma_numeric = float(rule.weights @ _legendre(q, rule.nodes) ** 2)
    gamma = 2.0 / q
    return {"g": g, "gamma": gamma, "gamma_numeric": gamma_numeric,
            "alpha": (gamma - g[q]) / gamma ** 2}


def lobatto_element_matrices(q):
    """Exact Lagrange mass and stiffness on the Lobatto nodes, plus the lumped diagonal."""
    rule = gauss_lobatto(q)
    V = npleg.legvander(rule.nodes, q)  # V[i, k] = P_k(x_i)
    coef = np.linalg.inv(V)  # column j: Legendre coefficients of the j-th Lagrange polynomial
    xg, wg = npleg.leggauss(q + 1)
    vals = npleg.legvander(xg, q) @ coef
    dvals = npleg.legvander(xg, q) @ np.vstack([npleg.legder(coef, axis=0), np.zeros((1, q + 1))])
    M = vals.T @ (wg[:, None] * vals)
    K = dvals.T @ (wg[:, None] * dvals)
    return rule, (M + M.T) / 2, (K + K.T) / 2, np.diag(rule.weights)


@dataclass
class SEMCheck:
    q: int
    alpha: float
    rank1_residual: float
    min_eig_difference: float
    max_eig_gap: float


def sem_rank1_check(q):
    """Residual of ``M_e = Mhat_e - alpha v v^T`` and the dominance diagnostics on [-1, 1]."""
    rule, M, K, Mhat = lobatto_element_matrices(q)
    alpha = legendre_norms(q)["alpha"]
    v = rule.weights * _legendre(q, rule.nodes)
    resid = float(np.abs(M - Mhat + alpha * np.outer(v, v)).max())
    min_diff = float(np.linalg.eigvalsh(Mhat - M)[0])
    lam_hat = generalized_eigs(K, Mhat).eigenvalues
    lam = generalized_eigs(K, M).eigenvalues
    return SEMCheck(q, alpha, resid, min_diff, float(np.max(lam_hat - lam)))


def sem_tensor_mass_ratios(q, dim=2):
    """Eigenvalues of ``(M_e, Mhat_e)`` for the tensor-product element; they lie in (0, 1]."""
    _, M, _, Mhat = lobatto_element_matrices(q)
    Md, Mh = M, Mhat
    for _ in range(dim - 1):
        Md, Mh = np.kron(Md, M), np.kron(Mh, Mhat)
    return scipy.linalg.eigh(Md, Mh, eigvals_only=True)
