"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Rates are the pairwise log2 ratios between the two finest levels of each
study. Level choices are fixed here so every run is reproducible.
"""
import time

import numpy as np
import pytest

from iga_lump import cli
from iga_lump.assembly import (assemble_mass, assemble_stiffness, change_basis, free_dof_mask,
                               lagrange_lumped_mass, quadrature_mass, restrict)
from iga_lump.dynamics import ManufacturedSolution
from iga_lump.experiments import dyn_convergence, eig_convergence, laplace_pencil
from iga_lump.interpolation import demko_points
from iga_lump.quadrature import greville_sign_table, quadrature_rule
from iga_lump.spectral import generalized_eigs, sem_rank1_check, sem_tensor_mass_ratios, \
    verify_spectrum_equality
from iga_lump.spline_core import greville_points, make_open_knot_vector, uniform_knot_vector


def points_of(kind, kv):
    return greville_points(kv) if kind == "greville" else demko_points(kv)


def finest_rate(rows, p, key):
    return [r for r in rows if r["p"] == p][-1][key]


@pytest.mark.criterion(1)
def test_criterion_01_sign_table(report, greville_signs):
    t0 = time.perf_counter()
    rows = greville_sign_table(range(1, 13), 32)
    elapsed = time.perf_counter() - t0
    bad = [(r["p"], r["k"]) for r in rows if r["all_positive"] != greville_signs(r["p"], r["k"])]
    report["detail"] = "%d cells, %d mismatches, %.1f s" % (len(rows), len(bad), elapsed)
    assert len(rows) == 78
    assert bad == []
    assert elapsed < 60


@pytest.mark.criterion(2)
def test_criterion_02_lumped_row_sums_are_weights(report):
    worst = 0.0
    for p in range(1, 6):
        for N in (4, 8, 16):
            kv = uniform_knot_vector(N, p)
            Mb = assemble_mass(kv)
            for kind in ("greville", "demko"):
                rule, op, _ = quadrature_rule(kv, points_of(kind, kv))
                rs = change_basis(Mb, op.inverse).sum(axis=1)
                dev = np.abs(rs - rule.weights).max() / np.abs(rule.weights).max()
                worst = max(worst, dev)
    report["detail"] = "max relative deviation %.2e" % worst
    assert worst <= 1e-10


@pytest.mark.criterion(3)
def test_criterion_03_spectrum_equality(report):
    worst = 0.0
    for p in (2, 3, 4):
        kv = uniform_knot_vector(16, p)
        mask = free_dof_mask(kv, "dirichlet")
        Kb = assemble_stiffness(kv)
        for kind in ("greville", "demko"):
            rule, op, _ = quadrature_rule(kv, points_of(kind, kv))
            dev = verify_spectrum_equality(
                restrict(Kb, mask), restrict(quadrature_mass(op, rule), mask),
                restrict(change_basis(Kb, op.inverse), mask),
                restrict(lagrange_lumped_mass(rule), mask))
            worst = max(worst, dev)
    report["detail"] = "max relative eigenvalue deviation %.2e" % worst
    assert worst <= 1e-9


@pytest.mark.criterion(4)
def test_criterion_04_negative_eigenvalues_match_negative_weights(report):
    kv = uniform_knot_vector(32, 4, 1)
    K, M, _, rule = laplace_pencil(kv, "greville", "neumann")
    assert K.shape[0] <= 200
    spec = generalized_eigs(K, M)
    report["detail"] = "n=%d, %d negative eigenvalues, %d negative weights" % (
        K.shape[0], spec.counts["negative_finite"], rule.n_negative)
    assert rule.n_negative > 0
    assert spec.counts["negative_finite"] == rule.n_negative
    assert spec.counts["infinite"] == 0


@pytest.mark.criterion(5)
def test_criterion_05_eigenfrequency_rates(report):
    got = {}
    rows = eig_convergence(range(1, 6), (32, 64, 128), "consistent")
    for p in range(1, 6):
        got["consistent", p] = (finest_rate(rows, p, "freq_rate"), 2 * p, 0.3)
    rows = eig_convergence(range(1, 6), (64, 128, 256), "row_sum")
    for p in range(1, 6):
        got["row_sum", p] = (finest_rate(rows, p, "freq_rate"), 2, 0.2)
    rows = eig_convergence(range(1, 6), (64, 128, 256), "greville")
    for p, target in zip(range(1, 6), (2, 4, 4, 5, 5)):
        got["greville", p] = (finest_rate(rows, p, "freq_rate"), target, 0.4)
    rows = eig_convergence((4, 5), (16, 32, 64), "demko")
    for p in (4, 5):
        got["demko", p] = (finest_rate(rows, p, "freq_rate"), 6, 0.4)
    off = {k: v for k, v in got.items() if abs(v[0] - v[1]) > v[2]}
    report["detail"] = " ".join("%s/p%d=%.2f" % (k[0], k[1], v[0]) for k, v in got.items())
    assert off == {}


@pytest.mark.criterion(6)
def test_criterion_06_demko_eigenfunction_stall(report):
    rows = eig_convergence((5,), (64, 128, 256), "demko")
    rates = [r["eigf_rate"] for r in rows[1:]]
    report["detail"] = "p=5 eigenfunction rates %s" % ", ".join("%.2f" % r for r in rates)
    assert all(3.0 <= r <= 4.0 for r in rates)


@pytest.mark.criterion(7)
def test_criterion_07_dynamics_rates(report):
    levels = (64, 128, 256)
    bump = dyn_convergence((3, 4), levels, ManufacturedSolution("bump"), "demko")
    full = dyn_convergence((3, 4, 5), levels, ManufacturedSolution("sin"), "demko")
    sub = dyn_convergence((3, 4, 5), levels, ManufacturedSolution("sin"), "demko",
                          subinterval=(0.1, 0.9))
    r_bump = {p: finest_rate(bump, p, "rate") for p in (3, 4)}
    r_full = {p: finest_rate(full, p, "rate") for p in (3, 4, 5)}
    r_sub = {p: finest_rate(sub, p, "rate") for p in (3, 4, 5)}
    report["detail"] = "bump %s; sin full %s; sin [0.1,0.9] %s" % tuple(
        ", ".join("p%d=%.2f" % kv for kv in d.items()) for d in (r_bump, r_full, r_sub))
    for p, r in r_bump.items():
        assert abs(r - (p + 1)) <= 0.4, p
    for p in r_full:
        assert 3.0 <= r_full[p] <= 4.0, p
        assert r_sub[p] >= r_full[p] + 0.5, p


@pytest.mark.criterion(8)
def test_criterion_08_sem_identity(report):
    worst = [0.0, np.inf, -np.inf]
    for q in range(1, 13):
        c = sem_rank1_check(q)
        worst = [max(worst[0], c.rank1_residual), min(worst[1], c.min_eig_difference),
                 max(worst[2], c.max_eig_gap)]
    ratios = sem_tensor_mass_ratios(2, 2)
    report["detail"] = "residual %.1e, min eig %.1e, max gap %.1e, 2D ratios [%.3f, %.3f]" % (
        worst[0], worst[1], worst[2], ratios.min(), ratios.max())
    assert worst[0] <= 1e-11
    assert worst[1] >= -1e-12
    assert worst[2] <= 1e-10
    assert ratios.min() > 0 and ratios.max() <= 1 + 1e-12


@pytest.mark.criterion(9)
def test_criterion_09_demko_stress(report, tmp_path, capsys):
    code = cli.main(["demko-stress", "--out", str(tmp_path), "seed=20240607", "n_trials=500",
                     "degrees=2-8", "max_ratio=1e4"])
    out = capsys.readouterr()
    report["detail"] = out.out.strip().splitlines()[0]
    assert code == 0, out.err


@pytest.mark.criterion(10)
def test_criterion_10_quadrature_sandwich(report):
    kvs = [uniform_knot_vector(N, p, k) for p in range(1, 9) for N in (8, 32)
           for k in range(p)]
    rng = np.random.default_rng(5)
    for _ in range(40):
        p = int(rng.integers(1, 9))
        brk = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, int(rng.integers(1, 15)))]))
        kvs.append(make_open_knot_vector(brk, p, int(rng.integers(0, p))))
    n_rules, worst_demko = 0, 0.0
    violations = []
    for kv in kvs:
        for kind in ("greville", "demko"):
            rule, op, _ = quadrature_rule(kv, points_of(kind, kv))
            I1, w1 = rule.total, rule.norm1
            n_rules += 1
            if not I1 <= w1 + 1e-10 or not w1 <= op.inverse_norm_inf() * I1 + 1e-10:
                violations.append((kind, kv.p, kv.n_spans))
            if kind == "demko":
                worst_demko = max(worst_demko, abs(w1 - I1))
    report["detail"] = "%d rules, %d violations, max Demko | ||w||_1 - I(1) | = %.1e" % (
        n_rules, len(violations), worst_demko)
    assert violations == []
    assert worst_demko <= 1e-10
