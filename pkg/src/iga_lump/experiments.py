"""Convergence and stress studies on the unit interval.

Each study returns plain row dictionaries; the command line layer only
formats them.
"""
import hashlib

import numpy as np

from .assembly import (abs_row_sum_lump, assemble_mass, assemble_stiffness, change_basis,
                       diagonal_scaling_lump, free_dof_mask, lagrange_lumped_mass,
                       restrict, row_sum_lump)
from .dynamics import build_problem, convergence_rates, exact_semidiscrete_solve, l2_error
from .errors import DemkoConvergenceError
from .interpolation import chebyshev_spline, collocation_matrix, demko_points, spline_extrema
from .quadrature import bspline_moments, moment_fitting_weights
from .spectral import generalized_eigs
from .spline_core import KnotVector, design_matrix, greville_points, span_quadrature, \
    uniform_knot_vector

LUMPED_KINDS = ("greville", "demko")
EIG_VARIANTS = ("consistent", "row_sum", "abs_row_sum", "diag_scaling") + LUMPED_KINDS


def _smoothness(kv):
    s = kv.smoothness
    return int(s.min()) if s.size else kv.degree - 1


def _variant_label(variant):
    return "lagrange" if variant in LUMPED_KINDS else variant


def make_points(kv, kind):
    if kind == "greville":
        return greville_points(kv)
    if kind == "demko":
        return demko_points(kv)
    raise ValueError("unknown point kind %r" % kind)


def laplace_pencil(kv, variant, bc="dirichlet"):
    """``(K, M, to_bspline, rule)`` for the Laplace eigenproblem with a given mass variant."""
    free = free_dof_mask(kv, bc)
    Kb = assemble_stiffness(kv)
    Mb = assemble_mass(kv)
    rule = None
    if variant in LUMPED_KINDS:
        op = collocation_matrix(kv, make_points(kv, variant))
        rule = moment_fitting_weights(op, bspline_moments(kv))
        C = op.inverse
        K = restrict(change_basis(Kb, C), free)
        M = restrict(lagrange_lumped_mass(rule), free)
        Cf = C[:, free]
        return K, M, (lambda y: Cf @ y), rule
    if variant == "consistent":
        M = Mb
    elif variant == "row_sum":
        M = row_sum_lump(Mb)
    elif variant == "abs_row_sum":
        M = abs_row_sum_lump(Mb)
    elif variant == "diag_scaling":
        M = diagonal_scaling_lump(Mb, bspline_moments(kv).total)
    else:
        raise ValueError("unknown mass variant %r" % variant)

    def embed(y):
        out = np.zeros((kv.n,) + np.shape(y)[1:])
        out[free] = y
        return out
    return restrict(Kb, free), restrict(M, free), embed, rule


def exact_laplace_mode(mode, bc):
    """Frequency, L2-normalized eigenfunction and its derivative for ``-u'' = lambda u`` on (0, 1)."""
    freq = mode * np.pi
    r2 = np.sqrt(2.0)
    if bc == "dirichlet":
        return freq, lambda x: r2 * np.sin(freq * x), lambda x: r2 * freq * np.cos(freq * x)
    return freq, lambda x: r2 * np.cos(freq * x), lambda x: -r2 * freq * np.sin(freq * x)


def eig_level(p, n_elements, variant, mode=4, bc="dirichlet", smoothness=None):
    """Frequency and eigenfunction errors of one mode on one mesh."""
    kv = uniform_knot_vector(n_elements, p, smoothness)
    K, M, to_b, rule = laplace_pencil(kv, variant, bc)
    spec = generalized_eigs(K, M, eigenvectors=True)
    row = {"p": p, "k": _smoothness(kv), "N": n_elements,
           "point_kind": variant if variant in LUMPED_KINDS else "none",
           "mass_variant": _variant_label(variant), "n_negative": spec.counts["negative_finite"],
           "n_infinite": spec.counts["infinite"]}
    if spec.counts["negative_finite"] or spec.counts["infinite"]:
        row.update(freq_error=np.nan, eigf_error=np.nan, definite=False)
        return row
    # Dirichlet modes start at index 0 (k=1); Neumann has the constant mode first
    idx = mode - 1 if bc == "dirichlet" else mode
    freq, efun, defun = exact_laplace_mode(mode, bc)
    vec = spec.vectors[:, idx]
    coeffs = to_b(vec)
    mass_form = float(vec @ (M @ vec))
    shift, eigf_error = mode_errors(kv, coeffs, freq, efun, defun, mass_form, variant == "consistent")
    lam_h = freq ** 2 + shift
    row.update(lambda_h=lam_h, freq_error=abs(shift) / (np.sqrt(lam_h) + freq) / freq,
               eigf_error=eigf_error, definite=True)
    return row


def mode_errors(kv, coeffs, freq, efun, defun, mass_form, consistent):
    """Eigenvalue shift ``R(u_h) - lambda`` and normalized eigenfunction L2 error.

    With ``e = u - u_h`` for the multiple ``u`` of the exact eigenfunction
    closest to ``u_h``, ``R(u_h) - lambda = (a(e, e) - lambda b(e, e)
    + lambda (b(u_h, u_h) - m_h(u_h, u_h))) / m_h(u_h, u_h)``. Each term is
    evaluated without the cancellation that limits a direct eigenvalue
    difference; ``mass_form`` is ``m_h(u_h, u_h)``.
    """
    x, w = span_quadrature(kv, kv.p + 3)
    B = design_matrix(kv, x)
    D = design_matrix(kv, x, order=1)
    uh, duh = B @ coeffs, D @ coeffs
    ue = efun(x)
    due = defun(x)
    scale = (w @ (ue * uh)) / (w @ (ue * ue))
    e, de = scale * ue - uh, scale * due - duh
    lam = freq ** 2
    b_uh = w @ (uh * uh)
    shift = w @ (de * de) - lam * (w @ (e * e))
    if not consistent:
        shift += lam * (b_uh - mass_form)
    shift /= mass_form
    nrm = np.sqrt(b_uh)
    sign = 1.0 if scale > 0 else -1.0
    eigf = np.sqrt(w @ (sign * uh / nrm - ue) ** 2)
    return float(shift), float(eigf)


def eig_convergence(degrees, levels, variant, mode=4, bc="dirichlet", smoothness=None):
    rows = []
    for p in degrees:
        block = [eig_level(p, N, variant, mode, bc, smoothness) for N in levels]
        _attach_rates(block, "freq_error", "freq_rate")
        _attach_rates(block, "eigf_error", "eigf_rate")
        rows.extend(block)
    return rows


def _attach_rates(block, key, name):
    h = np.array([1.0 / r["N"] for r in block])
    e = np.array([r[key] for r in block])
    if block and np.all(np.isfinite(e)) and np.all(e > 0) and len(block) > 1:
        pair, fit = convergence_rates(h, e)
    else:
        pair, fit = np.full(max(len(block) - 1, 0), np.nan), np.nan
    for i, r in enumerate(block):
        r[name] = pair[i - 1] if i else np.nan
        r[name + "_fit"] = fit


DYN_VARIANTS = ("consistent", "row_sum") + LUMPED_KINDS


def dyn_level(p, n_elements, solution, variant, T=1.5, bc="dirichlet", subinterval=None,
              smoothness=None):
    """Relative L2 error at ``T`` of the exact semi-discrete solution on one mesh."""
    kv = uniform_knot_vector(n_elements, p, smoothness)
    row = {"p": p, "k": _smoothness(kv), "N": n_elements,
           "point_kind": variant if variant in LUMPED_KINDS else "none",
           "mass_variant": _variant_label(variant), "solution": solution.kind}
    if variant in LUMPED_KINDS:
        problem = build_problem(kv, solution, bc, "lagrange", make_points(kv, variant))
        if not problem.mass_definite:
            row.update(error=np.nan, flagged="negative_weights")
            return row
    else:
        problem = build_problem(kv, solution, bc, variant)
    U = problem.to_bspline(exact_semidiscrete_solve(problem, [T]))
    row.update(error=l2_error(kv, U, solution, [T], subinterval)[0], flagged="")
    return row


def dyn_convergence(degrees, levels, solution, variant, T=1.5, bc="dirichlet",
                    subinterval=None, smoothness=None):
    rows = []
    for p in degrees:
        block = [dyn_level(p, N, solution, variant, T, bc, subinterval, smoothness)
                 for N in levels]
        _attach_rates(block, "error", "rate")
        rows.extend(block)
    return rows


def random_knot_vector(rng, degree, max_ratio=1e4, max_elements=24):
    """Random open knot vector: log-uniform span lengths and random interior smoothness."""
    n_el = int(rng.integers(1, max_elements + 1))
    spans = np.exp(rng.uniform(0.0, np.log(max_ratio), n_el))
    brk = np.concatenate([[0.0], np.cumsum(spans) / spans.sum()])
    brk[-1] = 1.0
    knots = [0.0] * (degree + 1)
    for b in brk[1:-1]:
        knots += [float(b)] * int(rng.integers(1, degree + 1))
    knots += [1.0] * (degree + 1)
    return KnotVector(knots, degree)


def knot_hash(kv):
    return hashlib.sha1(np.asarray(kv.knots, dtype=float).tobytes()).hexdigest()[:12]


def demko_stress(n_trials=500, degrees=range(2, 9), max_ratio=1e4, seed=0, max_elements=24):
    """Demko weights on random knot vectors; each row records the outcome of one trial."""
    rng = np.random.default_rng(seed)
    degrees = list(degrees)
    rows = []
    for trial in range(n_trials):
        p = degrees[trial % len(degrees)]
        kv = random_knot_vector(rng, p, max_ratio, max_elements)
        row = {"trial": trial, "p": p, "k": _smoothness(kv),
               "N": kv.n_spans, "point_kind": "demko", "mass_variant": "lagrange",
               "knot_hash": knot_hash(kv), "knots": " ".join("%.17g" % t for t in kv.knots)}
        try:
            pts = demko_points(kv)
        except DemkoConvergenceError as exc:
            row.update(status="no_convergence", min_weight=np.nan, n_negative=-1,
                       sup_minus_one=np.nan, note=str(exc))
            rows.append(row)
            continue
        op = collocation_matrix(kv, pts)
        rule = moment_fitting_weights(op, bspline_moments(kv))
        sup = spline_extrema(kv, chebyshev_spline(kv, pts.points[0]), 64)[2]
        row.update(status="ok", min_weight=rule.min_weight, n_negative=rule.n_negative,
                   sup_minus_one=sup - 1.0, note="")
        rows.append(row)
    return rows
