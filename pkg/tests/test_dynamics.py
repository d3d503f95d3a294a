import numpy as np
import pytest
from scipy.integrate import quad

from iga_lump.assembly import LumpedMass
from iga_lump.dynamics import (ErrorReport, ManufacturedSolution, SemiDiscreteProblem,
                               _forced_response, algorithm1_pipeline, build_problem,
                               central_difference_integrate, convergence_rates,
                               exact_semidiscrete_solve, l2_error, l2_projection, load_vector,
                               stable_time_step)
from iga_lump.errors import (CFLViolationError, IndefiniteMassError, NegativeWeightsError,
                             ResonanceError)
from iga_lump.interpolation import collocation_matrix, demko_points
from iga_lump.spectral import generalized_eigs
from iga_lump.spline_core import (eval_spline, greville_abscissae, greville_points,
                                  uniform_knot_vector)


def scalar_problem(K=4.0, M=1.0, load=1.0, omega=1.0, u0=0.5, v0=1.0, lumped=False):
    mass = LumpedMass(np.array([M]), "row_sum") if lumped else np.array([[M]])
    return SemiDiscreteProblem(K=np.array([[K]]), M=mass, load=np.array([load]), omega=omega,
                               u0=np.array([u0]), v0=np.array([v0]),
                               free=np.array([True]), space=None, mass_variant="scalar")


def scalar_exact(t, u0=0.5, v0=1.0):
    # y'' + 4 y = sin t
    return np.sin(t) / 3 + u0 * np.cos(2 * t) + (v0 - 1 / 3) / 2 * np.sin(2 * t)


@pytest.mark.parametrize("lumped", [False, True])
def test_scalar_oscillator_closed_form(lumped):
    t = np.linspace(0, 10, 41)
    y = exact_semidiscrete_solve(scalar_problem(lumped=lumped), t)[:, 0]
    np.testing.assert_allclose(y, scalar_exact(t), atol=1e-14)


def test_forced_response_against_direct_formulas():
    om = 3 * np.pi
    t = np.linspace(0, 2, 21)
    a = 5.0
    G, dG = _forced_response(np.array([a]), om, t[:, None])
    direct = (np.sin(om * t) - om / a * np.sin(a * t)) / (a ** 2 - om ** 2)
    np.testing.assert_allclose(G[:, 0], direct, atol=1e-15)
    ddirect = (om * np.cos(om * t) - om * np.cos(a * t)) / (a ** 2 - om ** 2)
    np.testing.assert_allclose(dG[:, 0], ddirect, atol=1e-14)
    G, _ = _forced_response(np.array([om]), om, t[:, None])
    resonant = (np.sin(om * t) - om * t * np.cos(om * t)) / (2 * om ** 2)
    np.testing.assert_allclose(G[:, 0], resonant, atol=1e-15)
    G, _ = _forced_response(np.array([0.0]), om, t[:, None])
    np.testing.assert_allclose(G[:, 0], (om * t - np.sin(om * t)) / om ** 2, atol=1e-15)


def test_resonance_detected():
    with pytest.raises(ResonanceError):
        exact_semidiscrete_solve(scalar_problem(K=1.0), [1.0])
    # no load on the resonant mode: not a resonance
    y = exact_semidiscrete_solve(scalar_problem(K=1.0, load=0.0, u0=1.0, v0=0.0), [0.5])
    assert y[0, 0] == pytest.approx(np.cos(0.5), abs=1e-15)


def test_modal_oscillation():
    kv = uniform_knot_vector(8, 3)
    prob = build_problem(kv, ManufacturedSolution("sin"), "dirichlet", "consistent")
    s = generalized_eigs(prob.K, prob.M, eigenvectors=True)
    k = 2
    phi = s.vectors[:, k]
    prob.u0, prob.v0, prob.load = phi.copy(), 0 * phi, 0 * phi
    t = np.array([0.0, 0.3, 1.1])
    U = exact_semidiscrete_solve(prob, t)
    expected = np.cos(np.sqrt(s.eigenvalues[k]) * t)[:, None] * phi
    np.testing.assert_allclose(U, expected, atol=1e-12 * np.abs(phi).max())


@pytest.mark.parametrize("variant", ["consistent", "row_sum", "lagrange"])
def test_modal_energy_conservation(variant):
    kv = uniform_knot_vector(10, 3)
    pts = demko_points(kv) if variant == "lagrange" else None
    prob = build_problem(kv, ManufacturedSolution("sin"), "dirichlet", variant, pts)
    rng = np.random.default_rng(0)
    prob.u0 = rng.normal(size=prob.n)
    prob.load = 0 * prob.load
    t = np.linspace(0, 3, 17)
    U, V = exact_semidiscrete_solve(prob, t, return_velocity=True)
    K = np.asarray(prob.K)
    Mv = np.array([prob.M @ v for v in V])
    E = 0.5 * np.einsum("ti,ti->t", V, Mv) + 0.5 * np.einsum("ti,ij,tj->t", U, K, U)
    assert np.abs(E - E[0]).max() <= 1e-10 * E[0]


def test_central_difference_amplitude_drift():
    kv = uniform_knot_vector(8, 2)
    prob = build_problem(kv, ManufacturedSolution("sin"), "dirichlet", "row_sum")
    s = generalized_eigs(prob.K, prob.M, eigenvectors=True)
    phi = s.vectors[:, 0]
    d = prob.M.diagonal
    phi = phi / np.sqrt(phi @ (d * phi))
    prob.u0, prob.v0, prob.load = phi.copy(), 0 * phi, 0 * phi
    dt = 0.5 * stable_time_step(prob)
    traj = central_difference_integrate(prob, dt, 1000)
    amp = traj @ (d * phi)
    peaks = np.abs(amp).max()
    assert abs(peaks - 1.0) <= 0.01
    assert np.abs(traj).max() <= 1.01 * np.abs(phi).max()


def test_central_difference_second_order():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        n = int(round(2.0 / dt))
        traj = central_difference_integrate(scalar_problem(), dt, n)
        errs.append(abs(traj[-1, 0] - scalar_exact(2.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(rates, 2.0, atol=0.1)


def test_central_difference_refusals():
    with pytest.raises(CFLViolationError):
        central_difference_integrate(scalar_problem(), 0.95, 10)
    bad = scalar_problem(M=-1.0, lumped=True)
    with pytest.raises(IndefiniteMassError):
        central_difference_integrate(bad, 0.01, 10, dt_crit=1.0)
    with pytest.raises(IndefiniteMassError):
        exact_semidiscrete_solve(bad, [1.0])


def test_collocation_round_trip():
    kv = uniform_knot_vector(20, 4)
    op = collocation_matrix(kv, demko_points(kv))
    x = np.random.default_rng(2).normal(size=(kv.n, 5))
    np.testing.assert_allclose(op.solve(op.matvec(x)), x, atol=1e-11)


def test_pipeline_refuses_negative_weights():
    kv = uniform_knot_vector(32, 4, 1)
    with pytest.raises(NegativeWeightsError) as info:
        algorithm1_pipeline(kv, greville_points(kv), ManufacturedSolution("bump"))
    assert info.value.weights is not None and info.value.weights.min() < 0


def test_pipeline_p1_greville_equals_row_sum():
    kv = uniform_knot_vector(16, 1)
    sol = ManufacturedSolution("bump")
    t = np.array([0.4, 1.5])
    res = algorithm1_pipeline(kv, greville_points(kv), sol, times=t)
    rs = build_problem(kv, sol, "dirichlet", "row_sum")
    ref = rs.to_bspline(exact_semidiscrete_solve(rs, t))
    np.testing.assert_allclose(res.coefficients, ref, atol=1e-13)


def test_pipeline_uses_matrix_free_stiffness():
    kv = uniform_knot_vector(12, 3)
    prob = build_problem(kv, ManufacturedSolution("bump"), "dirichlet", "lagrange",
                         demko_points(kv))
    y = np.random.default_rng(1).normal(size=prob.n)
    np.testing.assert_allclose(prob.apply_stiffness(y), prob.K @ y,
                               atol=1e-11 * np.abs(prob.K @ y).max())


def test_pipeline_central_matches_exact():
    kv = uniform_knot_vector(8, 2)
    sol = ManufacturedSolution("bump")
    pts = demko_points(kv)
    ex = algorithm1_pipeline(kv, pts, sol, T=0.5)
    dt = 0.05 * stable_time_step(build_problem(kv, sol, "dirichlet", "lagrange", pts))
    cd = algorithm1_pipeline(kv, pts, sol, T=0.5, integrator="central", dt=dt)
    scale = np.abs(ex.coefficients).max()
    assert np.abs(cd.coefficients - ex.coefficients).max() <= 1e-2 * scale


def test_time_sampling_does_not_change_errors():
    kv = uniform_knot_vector(16, 3)
    sol = ManufacturedSolution("bump")
    pts = demko_points(kv)
    T = 1.5
    errs = []
    for n in (1, 64, 128):
        times = np.linspace(0, T, n + 1)[1:]
        res = algorithm1_pipeline(kv, pts, sol, times=times)
        errs.append(l2_error(kv, res.coefficients[-1], sol, [T])[0])
    assert max(abs(e - errs[0]) for e in errs) <= 1e-12 * errs[0]


def test_manufactured_solutions():
    x = np.linspace(0, 1, 101)
    for kind in ("sin", "bump"):
        s = ManufacturedSolution(kind)
        assert np.abs(s(x, 0.0)).max() == 0
        np.testing.assert_allclose(s.velocity(x, 0.0), s.omega * s.spatial(x))
        assert abs(s.spatial(1.0)) < 1e-14 and abs(s.spatial(0.0)) < 1e-14
    np.testing.assert_allclose(ManufacturedSolution("sin").source_profile(x), 0, atol=1e-12)
    b = ManufacturedSolution("bump")
    h = 1e-4
    fd = (b.spatial(x[1:-1] + h) - 2 * b.spatial(x[1:-1]) + b.spatial(x[1:-1] - h)) / h ** 2
    np.testing.assert_allclose(b.spatial_second_derivative(x[1:-1]), fd, atol=1e-3)
    with pytest.raises(ValueError):
        ManufacturedSolution("tan")


def test_initial_data():
    sol = ManufacturedSolution("sin")
    errs = []
    for N in (8, 16, 32):
        kv = uniform_knot_vector(N, 2)
        prob = build_problem(kv, sol, "dirichlet", "consistent")
        assert np.all(prob.u0 == 0)
        v = prob.to_bspline(prob.v0)
        errs.append(l2_error(kv, v, lambda x, t: sol.omega * sol.spatial(x), [0.0], relative=False)[0])
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates[-1] == pytest.approx(3.0, abs=0.2)


def test_neumann_load_sums_to_integral():
    kv = uniform_knot_vector(10, 3)
    sol = ManufacturedSolution("bump")
    ref = quad(sol.source_profile, 0, 1, limit=200)[0]
    # partition of unity: the sum is the Gauss estimate of the integral
    assert load_vector(kv, sol.source_profile).sum() == pytest.approx(ref, abs=1e-7)
    assert load_vector(kv, sol.source_profile, extra_points=10).sum() == pytest.approx(ref, abs=1e-12)
    prob = build_problem(kv, ManufacturedSolution("cos"), "neumann", "consistent")
    assert prob.n == kv.n


def test_projection_of_spline_is_exact():
    kv = uniform_knot_vector(6, 3)
    c = np.random.default_rng(0).normal(size=kv.n)
    np.testing.assert_allclose(l2_projection(kv, lambda x: eval_spline(kv, c, x)), c, atol=1e-11)


def test_consistent_mass_bump_rate_p5():
    sol = ManufacturedSolution("bump")
    errs = []
    for N in (64, 128, 256):
        kv = uniform_knot_vector(N, 5)
        prob = build_problem(kv, sol, "dirichlet", "consistent")
        U = prob.to_bspline(exact_semidiscrete_solve(prob, [1.5]))
        errs.append(l2_error(kv, U, sol, [1.5])[0])
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates[-1] == pytest.approx(6.0, abs=0.3)


def test_l2_error_basics():
    # Greville abscissae are the coefficients of the identity function x
    kv = uniform_knot_vector(4, 2)
    c = greville_abscissae(kv)
    assert l2_error(kv, c, lambda x, t: x, [1.0])[0] <= 1e-15
    with pytest.raises(ValueError):
        l2_error(kv, c, lambda x, t: 0 * x, [1.0])
    sub = l2_error(kv, c + 1.0, lambda x, t: x, [1.0], subinterval=(0.25, 0.75), relative=False)
    assert sub[0] == pytest.approx(np.sqrt(0.5), abs=1e-14)


def test_convergence_rates_and_report(tmp_path):
    h = 1.0 / np.array([8, 16, 32, 64])
    e = 3.0 * h ** 4
    pair, fit = convergence_rates(h, e)
    np.testing.assert_allclose(pair, 4.0, atol=1e-12)
    assert fit == pytest.approx(4.0, abs=1e-12)
    rep = ErrorReport([8, 16, 32, 64], h, e, p=3, mass_variant="lagrange")
    assert not rep.stalled
    assert len(rep.rows()) == 4 and np.isnan(rep.rows()[0]["rate"])
    # pairwise rates 5, 4, 3: decreasing by 2 in total
    stall = ErrorReport([8, 16, 32, 64], h, [1.0, 2.0 ** -5, 2.0 ** -9, 2.0 ** -12])
    np.testing.assert_allclose(stall.rates, [5, 4, 3])
    assert stall.stalled
    rep.to_csv(tmp_path / "r.csv")
    assert open(tmp_path / "r.csv").readline().strip() == "level,h,p,mass_variant,error,rate"
