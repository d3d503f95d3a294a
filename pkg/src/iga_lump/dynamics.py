"""Semi-discrete wave problems ``M u'' + K u = f`` on the unit interval.

Time errors are removed by an exact modal solve; central differences are
available for stability experiments.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import (LumpedMass, abs_row_sum_lump, apply_lagrange_stiffness,
                       assemble_mass, assemble_stiffness, diagonal_scaling_lump, free_dof_mask,
                       lagrange_lumped_mass, quadrature_mass, restrict, row_sum_lump)
from .errors import CFLViolationError, IndefiniteMassError, NegativeWeightsError, ResonanceError
from .interpolation import collocation_matrix
from .quadrature import bspline_moments, moment_fitting_weights
from .spline_core import GeometryMap, as_knot_vector, design_matrix, span_quadrature

RESONANCE_RTOL = 1e-8
FORCING_RTOL = 1e-6


@dataclass(frozen=True)
class ManufacturedSolution:
    """``u(x, t) = w(x) sin(omega t)`` with ``rho = kappa = 1``.

    ``kind`` selects ``sin`` (``w = sin(omega x)``, no source), ``bump``
    (``w = x (1 - x) exp(-((x - center) / width)^2)``) or ``cos`` (a
    Neumann-compatible variant of ``sin``).
    """

    kind: str = "sin"
    omega: float = 3 * np.pi
    width: float = 0.1
    center: float = 0.5

    def __post_init__(self):
        if self.kind not in ("sin", "bump", "cos"):
            raise ValueError("unknown manufactured solution %r" % self.kind)

    def _bump_parts(self, x):
        z = (x - self.center) / self.width
        E = np.exp(-z * z)
        dE = -2 * z / self.width * E
        d2E = (4 * z * z - 2) / self.width ** 2 * E
        return x * (1 - x), 1 - 2 * x, -2.0, E, dE, d2E

    def spatial(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sin":
            return np.sin(self.omega * x)
        if self.kind == "cos":
            return np.cos(self.omega * x)
        g, _, _, E, _, _ = self._bump_parts(x)
        return g * E

    def spatial_second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sin":
            return -self.omega ** 2 * np.sin(self.omega * x)
        if self.kind == "cos":
            return -self.omega ** 2 * np.cos(self.omega * x)
        g, dg, d2g, E, dE, d2E = self._bump_parts(x)
        return d2g * E + 2 * dg * dE + g * d2E

    def source_profile(self, x):
        """``g`` in ``f(x, t) = g(x) sin(omega t)``."""
        return -self.omega ** 2 * self.spatial(x) - self.spatial_second_derivative(x)

    def __call__(self, x, t):
        return self.spatial(x) * np.sin(self.omega * t)

    def velocity(self, x, t):
        return self.omega * self.spatial(x) * np.cos(self.omega * t)


@dataclass
class SemiDiscreteProblem:
    """Free-DOF system ``M y'' + K y = load sin(omega t)``.

    ``to_bspline`` maps a free coefficient vector (or a stack of them) to
    full B-spline coefficients.
    """

    K: object
    M: object
    load: np.ndarray
    omega: float
    u0: np.ndarray
    v0: np.ndarray
    free: np.ndarray
    space: object
    mass_variant: str
    to_bspline: object = None
    stiffness_matvec: object = None
    geometry: object = None
    rule: object = None

    @property
    def mass_definite(self):
        if isinstance(self.M, LumpedMass):
            return self.M.is_positive
        try:
            scipy.linalg.cholesky(np.asarray(self.M))
            return True
        except np.linalg.LinAlgError:
            return False

    @property
    def n(self):
        return self.u0.size

    def apply_stiffness(self, y):
        if self.stiffness_matvec is not None:
            return self.stiffness_matvec(y)
        return self.K @ y

    def apply_mass_inverse(self, y):
        if isinstance(self.M, LumpedMass):
            return y / self.M.diagonal.reshape((-1,) + (1,) * (np.ndim(y) - 1))
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(np.asarray(self.M)), y)


def load_vector(space, f, geometry=None, extra_points=2):
    """``int f B_i`` with ``p + 1 + extra_points`` Gauss points per span."""
    kv = as_knot_vector(space)
    geometry = (geometry or GeometryMap.identity(1)).for_dim(1)
    x, w = span_quadrature(kv, kv.p + 1 + extra_points)
    B = design_matrix(kv, x)
    return B.T @ (w * geometry.scale[0] * f(geometry(0, x)))


def l2_projection(space, f, mask=None, geometry=None, M=None):
    """B-spline coefficients of the L2 projection of ``f`` onto the (constrained) space."""
    kv = as_knot_vector(space)
    if mask is None:
        mask = np.ones(kv.n, dtype=bool)
    if M is None:
        M = assemble_mass(kv, 1.0, geometry)
    rhs = load_vector(kv, f, geometry)
    out = np.zeros(kv.n)
    out[mask] = scipy.linalg.solve(restrict(M, mask), rhs[mask], assume_a="pos")
    return out


MASS_VARIANTS = ("consistent", "row_sum", "abs_row_sum", "diag_scaling", "quadrature", "lagrange")


def build_problem(space, manufactured, bc="dirichlet", mass_variant="consistent", points=None,
                  geometry=None):
    """Assemble the free-DOF system for a manufactured solution on a 1D space.

    ``quadrature`` uses ``A^T W A`` in the B-spline basis, ``lagrange`` the
    diagonal weight matrix in the interpolatory basis; both need ``points``.
    Initial data are L2 projections onto the constrained space.
    Indefinite masses are allowed here and flagged via ``mass_definite``.
    """
    if mass_variant not in MASS_VARIANTS:
        raise ValueError("unknown mass variant %r" % mass_variant)
    kv = as_knot_vector(space)
    geometry = (geometry or GeometryMap.identity(1)).for_dim(1)
    free = free_dof_mask(kv, bc)
    Mb = assemble_mass(kv, 1.0, geometry)
    Kb = assemble_stiffness(kv, 1.0, geometry)
    om = manufactured.omega
    g = load_vector(kv, manufactured.source_profile, geometry)
    u0 = np.zeros(kv.n)
    v0 = l2_projection(kv, lambda x: om * manufactured.spatial(x), free, geometry, Mb)

    def embed(y):
        y = np.asarray(y)
        out = np.zeros(y.shape[:-1] + (kv.n,))
        out[..., free] = y
        return out

    rule = None
    if mass_variant in ("quadrature", "lagrange"):
        if points is None:
            raise ValueError("%s mass requires interpolation points" % mass_variant)
        op = collocation_matrix(kv, points)
        rule = moment_fitting_weights(op, bspline_moments(kv, 1.0, geometry), geometry)
    if mass_variant == "lagrange":
        C = op.inverse
        Cf = C[np.ix_(free, free)]
        Kl = C.T @ Kb @ C
        return SemiDiscreteProblem(
            K=restrict((Kl + Kl.T) / 2, free), M=restrict(lagrange_lumped_mass(rule), free),
            load=(C.T @ g)[free], omega=om, u0=op.matvec(u0)[free], v0=op.matvec(v0)[free],
            free=free, space=kv, mass_variant=mass_variant,
            to_bspline=lambda y: embed(np.asarray(y) @ Cf.T), geometry=geometry, rule=rule,
            stiffness_matvec=_lagrange_matvec(Kb, op, free))
    if mass_variant == "consistent":
        M = Mb
    elif mass_variant == "row_sum":
        M = row_sum_lump(Mb)
    elif mass_variant == "abs_row_sum":
        M = abs_row_sum_lump(Mb)
    elif mass_variant == "diag_scaling":
        M = diagonal_scaling_lump(Mb, bspline_moments(kv, 1.0, geometry).total)
    else:
        M = quadrature_mass(op, rule)
    return SemiDiscreteProblem(
        K=restrict(Kb, free), M=restrict(M, free), load=g[free], omega=om, u0=u0[free],
        v0=v0[free], free=free, space=kv, mass_variant=mass_variant, to_bspline=embed,
        geometry=geometry, rule=rule)


def _lagrange_matvec(Kb, op, free):
    def matvec(y):
        y = np.asarray(y)
        full = np.zeros((free.size,) + y.shape[1:])
        full[free] = y
        return apply_lagrange_stiffness(Kb, op, full)[free]
    return matvec


def _modal_basis(problem):
    if not problem.mass_definite:
        raise IndefiniteMassError("mass variant %r is not positive definite"
                                  % problem.mass_variant)
    K = problem.K.toarray() if hasattr(problem.K, "toarray") else np.asarray(problem.K)
    if isinstance(problem.M, LumpedMass):
        s = 1.0 / np.sqrt(problem.M.diagonal)
        lam, V = scipy.linalg.eigh(s[:, None] * K * s[None, :])
        Phi = s[:, None] * V
        MPhi = problem.M.diagonal[:, None] * Phi
    else:
        lam, Phi = scipy.linalg.eigh(K, problem.M)
        MPhi = problem.M @ Phi
    return lam, Phi, MPhi


def _sinc(z):
    return np.sinc(z / np.pi)


def _forced_response(a, om, t):
    """Zero-data response ``G`` of ``y'' + a^2 y = sin(om t)`` and its derivative.

    Written with half-angle products so that ``a -> om`` loses no accuracy.
    """
    zero = a == 0.0
    a_safe = np.where(zero, 1.0, a)
    half_sum, half_diff = (a + om) * t / 2, (a - om) * t / 2
    D = t * np.cos(half_sum) * _sinc(half_diff) / a_safe - np.sin(om * t) / (a_safe * om)
    G = -om * D / (a + om)
    dG = om * t * np.sin(half_sum) * _sinc(half_diff) / (a + om)
    G = np.where(zero, (om * t - np.sin(om * t)) / om ** 2, G)
    dG = np.where(zero, (1 - np.cos(om * t)) / om, dG)
    return G, dG


def exact_semidiscrete_solve(problem, times, return_velocity=False):
    """Closed-form modal solution at ``times``; rows are free coefficient vectors.

    A mode is resonant when ``|lambda - omega^2| <= 1e-8 omega^2`` and the load
    acts on it with more than ``1e-6`` of the largest modal load; that case
    raises ResonanceError.
    """
    lam, Phi, MPhi = _modal_basis(problem)
    t = np.atleast_1d(np.asarray(times, dtype=float))
    om = problem.omega
    y0 = MPhi.T @ problem.u0
    z0 = MPhi.T @ problem.v0
    gm = Phi.T @ problem.load
    lam_scale = max(abs(lam).max(), 1.0)
    zero = np.abs(lam) <= 1e-12 * lam_scale
    lam = np.where(zero, 0.0, lam)
    gmax = np.abs(gm).max() if gm.size else 0.0
    near = np.abs(lam - om ** 2) <= RESONANCE_RTOL * om ** 2
    if gmax > 0 and np.any(near & (np.abs(gm) > FORCING_RTOL * gmax)):
        raise ResonanceError("forcing frequency resonates with a discrete mode")
    a = np.sqrt(np.maximum(lam, 0.0))
    T = t[:, None]
    a_safe = np.where(zero, 1.0, a)
    cos = np.where(zero, 1.0, np.cos(a * T))
    sinc = np.where(zero, T, np.sin(a * T) / a_safe)
    G, dG = _forced_response(a, om, T)
    U = (y0 * cos + z0 * sinc + gm * G) @ Phi.T
    if not return_velocity:
        return U
    dY = -y0 * a * np.sin(a * T) + z0 * cos + gm * dG
    return U, dY @ Phi.T


def stable_time_step(problem):
    """``2 / sqrt(lambda_max)`` for the problem's pencil."""
    lam = _modal_basis(problem)[0]
    return 2.0 / np.sqrt(lam.max())


def central_difference_integrate(problem, dt, n_steps, safety=0.9, dt_crit=None):
    """Explicit central differences; returns the (n_steps + 1, n) trajectory."""
    if not problem.mass_definite:
        raise IndefiniteMassError("refusing to integrate with an indefinite mass (%s)"
                                  % problem.mass_variant)
    if dt_crit is None:
        dt_crit = stable_time_step(problem)
    if dt >= safety * dt_crit:
        raise CFLViolationError("dt=%.6g exceeds %.3g * dt_crit=%.6g" % (dt, safety, dt_crit))
    om = problem.omega
    out = np.empty((n_steps + 1, problem.n))
    u = problem.u0.astype(float)
    acc = problem.apply_mass_inverse(problem.load * 0.0 - problem.apply_stiffness(u))
    u_next = u + dt * problem.v0 + 0.5 * dt * dt * acc
    out[0] = u
    for step in range(1, n_steps + 1):
        out[step] = u_next
        f = problem.load * np.sin(om * step * dt)
        acc = problem.apply_mass_inverse(f - problem.apply_stiffness(u_next))
        u, u_next = u_next, 2 * u_next - u + dt * dt * acc
    return out


@dataclass
class PipelineResult:
    times: np.ndarray
    coefficients: np.ndarray  # full B-spline coefficients, one row per time
    rule: object
    problem: SemiDiscreteProblem


def algorithm1_pipeline(space, points, manufactured, bc="dirichlet", T=1.5, times=None,
                        integrator="exact", dt=None, geometry=None):
    """Lagrange-basis time stepping with the diagonal weight mass.

    Collocation, moment-fitted weights, diagonal mass, solve in interpolatory
    coordinates and map back by ``C``. Negative weights are refused before
    the mass is formed.
    """
    kv = as_knot_vector(space)
    op = collocation_matrix(kv, points)
    rule = moment_fitting_weights(op, bspline_moments(kv, 1.0, geometry), geometry)
    if rule.n_negative or not rule.all_positive:
        raise NegativeWeightsError("quadrature has %d negative weights (min %.3g)"
                                   % (rule.n_negative, rule.min_weight), rule.weights)
    problem = build_problem(kv, manufactured, bc, "lagrange", points, geometry)
    if times is None:
        times = np.array([T])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if integrator == "exact":
        Y = exact_semidiscrete_solve(problem, times)
    elif integrator == "central":
        if dt is None:
            dt = 0.5 * stable_time_step(problem)
        n_steps = int(np.ceil(times.max() / dt))
        dt = times.max() / n_steps
        traj = central_difference_integrate(problem, dt, n_steps)
        Y = traj[np.rint(times / dt).astype(int)]
    else:
        raise ValueError("integrator must be 'exact' or 'central'")
    return PipelineResult(times, problem.to_bspline(Y), rule, problem)


def l2_error(space, coeffs, exact, times, subinterval=None, geometry=None, relative=True):
    """(Relative) L2 errors of spline trajectories against ``exact(x, t)``.

    ``coeffs`` has one row of full B-spline coefficients per time. Integrals
    use ``p + 2`` Gauss points per span; spans are split at the ends of
    ``subinterval`` (parametric coordinates).
    """
    kv = as_knot_vector(space)
    geometry = (geometry or GeometryMap.identity(1)).for_dim(1)
    x, w = span_quadrature(kv, kv.p + 2, interval=subinterval)
    w = w * geometry.scale[0]
    B = design_matrix(kv, x)
    coeffs = np.atleast_2d(coeffs)
    times = np.atleast_1d(times)
    xp = geometry(0, x)
    errs = np.empty(times.size)
    for j, t in enumerate(times):
        ue = exact(xp, t)
        diff = np.sqrt(w @ (B @ coeffs[j] - ue) ** 2)
        if relative:
            nrm = np.sqrt(w @ ue ** 2)
            if nrm == 0:
                raise ValueError("exact solution has zero norm at t=%g" % t)
            diff /= nrm
        errs[j] = diff
    return errs


def convergence_rates(h, errors):
    """Pairwise ``log2``-type rates and the least-squares slope over the last three levels."""
    h, e = np.asarray(h, float), np.asarray(errors, float)
    pair = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    k = min(3, h.size)
    fit = np.polyfit(np.log(h[-k:]), np.log(e[-k:]), 1)[0] if k >= 2 else np.nan
    return pair, float(fit)


@dataclass
class ErrorReport:
    """Errors per refinement level; rates between consecutive levels."""

    levels: list
    h: np.ndarray
    errors: np.ndarray
    p: int = 0
    mass_variant: str = ""
    subinterval: tuple = None
    rates: np.ndarray = field(init=False)
    fitted_rate: float = field(init=False)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        self.rates, self.fitted_rate = convergence_rates(self.h, self.errors)

    @property
    def stalled(self):
        """Rates decreasing monotonically and by more than 0.5 in total."""
        r = self.rates
        return bool(r.size >= 2 and np.all(np.diff(r) < 0) and r[0] - r[-1] > 0.5)

    def rows(self):
        out = []
        for i, (lev, h, e) in enumerate(zip(self.levels, self.h, self.errors)):
            rate = self.rates[i - 1] if i else np.nan
            out.append({"level": lev, "h": h, "p": self.p, "mass_variant": self.mass_variant,
                        "error": e, "rate": rate})
        return out

    def to_csv(self, path):
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(list(rows[0]))
            for r in rows:
                wr.writerow([("%.17g" % v) if isinstance(v, float) else v for v in r.values()])
