import csv
import math

import numpy as np
import pytest

from schrolab.exponential_sums import DEFAULT_C0, PhaseTerm, s_j_sum
from schrolab.omega_builder import OmegaCell, lift_to_omega_star, sample_eval_points
from schrolab.propagator import (
    ConvergenceError,
    PointPhases,
    brute_propagate,
    c3_chain,
    e3_scale,
    error_budget_e1,
    error_budget_e2,
    error_budget_e3,
    error_budget_e3_asymptotic,
    error_budget_e3_detail,
    incomplete_sup,
    lambda_integral,
    lower_bound_target,
    main_term,
    phases_from_floats,
    phases_from_point,
    propagate,
    propagate_floats,
    reference_amplitude,
    weyl_incomplete_bound,
    write_points_csv,
    xi_factor,
)
from schrolab.wave_packet import composite_gauss, evaluate_f, packet_params


@pytest.fixture(scope="module")
def p12():
    return packet_params(2, 1e12)


@pytest.fixture(scope="module")
def points12(p12):
    return sample_eval_points(p12, 12, seed=17)


def small_instances(count, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for i in range(count):
        n = 2 if i % 2 == 0 else 3
        R = float(rng.uniform(64, 8000 if n == 2 else 2900))
        p = packet_params(n, R, strict=False)
        x = [float(rng.uniform(-3, 3)) / p.S1] + list(rng.uniform(-0.05, 0.05, n - 1))
        t = float(rng.uniform(0, 0.2)) / R
        out.append((p, x, t))
    return out


# -- factorized formula against the unfactored oracle ------------------------


def test_brute_matches_factorized(bump):
    for p, x, t in small_instances(16, seed=31):
        assert p.rho <= 20
        fast = propagate_floats(x, t, p, bump)
        slow = brute_propagate(x, t, p, bump)
        assert abs(fast - slow) <= 1e-8 * abs(slow)


def test_time_zero_is_f(bump):
    for n, R in ((2, 500.0), (3, 900.0)):
        p = packet_params(n, R, strict=False)
        rng = np.random.Generator(np.random.Philox(n))
        for _ in range(5):
            x = list(rng.uniform(-0.05, 0.05, n))
            assert propagate_floats(x, 0.0, p, bump) == pytest.approx(evaluate_f(x, p, bump), rel=1e-10, abs=1e-13)


def test_brute_limits(bump):
    p = packet_params(3, 1e6, strict=False)
    with pytest.raises(ValueError):
        brute_propagate([0.0, 0.0, 0.0], 0.0, p, bump)
    with pytest.raises(ValueError):
        brute_propagate([0.0], 0.0, packet_params(2, 100.0, strict=False), bump)


def test_unitarity_of_factors(bump):
    p = packet_params(2, 16.0, strict=False)
    t = 0.05
    # coordinate 1: int |lambda factor|^2 dx_1 = |phi|_2^2 / S1 for every t
    b, wb = composite_gauss(-300.0, 300.0, 300, 24)
    a1 = p.S1**2 * t
    vals = np.array([lambda_integral(PointPhases(PhaseTerm(), bi, a1, (), PhaseTerm(), (), t), p, bump) for bi in b])
    assert float(np.dot(wb, np.abs(vals) ** 2)) / p.S1 == pytest.approx(bump.phi_l2**2 / p.S1, rel=1e-9)
    # coordinates j: int |xi factor|^2 dx_j = count |phi|_2^2
    x, w = composite_gauss(-250.0, 250.0, 500, 16)
    l2t = PhaseTerm(0, p.L**2 * t)
    vals = np.array([xi_factor(2, PointPhases(PhaseTerm(), 0.0, 0.0, (PhaseTerm(0, p.L * xj),), l2t, (xj,), t), p, bump) for xj in x])
    assert float(np.dot(w, np.abs(vals) ** 2)) == pytest.approx(p.count * bump.phi_l2**2, rel=1e-9)


# -- large R -----------------------------------------------------------------


def test_reference_phases_agree(p12, points12, bump):
    for pt in points12[:4]:
        res = propagate(pt, p12, bump, check_convergence=True)
        ref = reference_amplitude(pt, p12, bump)
        assert abs(res.amplitude - ref) <= 1e-9 * abs(ref)


def test_exact_and_float_phases_agree(p12, points12, bump):
    pt = points12[0]
    a = propagate(pt, p12, bump).amplitude
    b = propagate_floats(pt.x, pt.t, p12, bump)
    # the float route only sees roundings of (x, t); L^2 t alone carries ~1e-8 rad of error
    assert abs(a - b) <= 1e-5 * abs(a)


def test_convergence_error_on_unresolved_oscillation(p12, bump):
    ph = phases_from_floats([0.4, 0.0], 0.0, p12)
    with pytest.raises(ConvergenceError):
        lambda_integral(ph, p12, bump, check_convergence=True)


def test_xi_factor_index_checked(p12, points12, bump):
    with pytest.raises(ValueError):
        xi_factor(1, points12[0], p12, bump)
    with pytest.raises(ValueError):
        phases_from_floats([0.1], 0.0, p12)


def test_lambda_factor_near_one(p12, points12, bump):
    for pt in points12:
        lam = lambda_integral(pt, p12, bump)
        assert abs(lam) >= 1 - p12.c0


def test_sj_full_at_exact_point_matches_gauss_chain(p12, bump):
    cell = OmegaCell(100, 37, (50,), p12.U, p12.V)
    pt = lift_to_omega_star(cell, p12)[0]
    ph = phases_from_point(pt, p12)
    s = abs(s_j_sum(ph.lx[0], ph.l2t, 2 * p12.rho, p12))
    det = error_budget_e3_detail(pt, p12)
    assert abs(s - det.main[0]) <= det.e4_parts[0]
    assert det.main[0] == pytest.approx(main_term(100, p12) / (1 - p12.c0) ** 2)


# -- budgets -----------------------------------------------------------------


def test_target_value(p12):
    assert lower_bound_target(p12) == pytest.approx(0.5 * 0.75**2 * 2**-0.5 * 1000, rel=1e-14)
    assert lower_bound_target(p12) == pytest.approx(198.8738, abs=1e-4)


def test_budget_formulas(p12, points12, bump):
    pt = points12[0]
    assert error_budget_e1(pt, p12, bump, 10.0) == pytest.approx(bump.phi_hat_l1 * 10 * pt.t)
    e2 = error_budget_e2(pt, p12, bump, sj_sup=50.0, sj_full=40.0)
    assert e2 == pytest.approx(2 * p12.R * pt.t * bump.phi_prime_inf * 50)
    p3 = packet_params(3, 1e15, strict=False)
    ph = PointPhases(PhaseTerm(), 0.0, 0.0, (PhaseTerm(), PhaseTerm()), PhaseTerm(), (0.0, 0.0), 1e-16)
    a, b = bump.phi_inf * 40, 2 * p3.R * 1e-16 * bump.phi_prime_inf * 50
    assert error_budget_e2(ph, p3, bump, 50.0, 40.0) == pytest.approx(b * b + 2 * a * b)
    assert error_budget_e1(ph, p3, bump, 10.0) == pytest.approx(3 * bump.phi_hat_l1**2 * 100 * 1e-16)


def test_e3_detail_consistency(p12, points12):
    for pt in points12:
        d = error_budget_e3_detail(pt, p12)
        prod = math.prod(m + a + b for m, a, b in zip(d.main, d.e3_parts, d.e4_parts))
        assert d.total == pytest.approx(prod - math.prod(d.main))
        assert d.implied_C3 == pytest.approx(d.total / e3_scale(p12))
        an = error_budget_e3(pt, p12, "analytic")
        assert d.total <= an
        assert an <= error_budget_e3_asymptotic(p12)
    with pytest.raises(ValueError):
        error_budget_e3_detail(points12[0], p12, "bogus")


def test_c3_chain_constants(p12):
    ch = c3_chain(p12)
    A = (2 * p12.mu0) ** -0.5
    assert ch["A"] == pytest.approx(A)
    assert ch["C3"] == pytest.approx(max(ch["alpha"], ch["C2prime"]))
    assert ch["C3"] > 1e4


@pytest.mark.slow
def test_e3_below_quarter_main_at_large_scale():
    # relative E3 decays only like R^(-1/6); at R = 1e12 it is not yet below the quarter threshold
    p = packet_params(2, 1e18)
    for pt in sample_eval_points(p, 8, seed=3):
        thr = 0.25 * 2 ** (-(p.n - 1) / 2) * p.c0 * main_term(pt.cell.q, p)
        assert error_budget_e3(pt, p) < thr


def test_incomplete_sup_brute():
    import cmath

    for a1, aj, q in ((1, 2, 4), (37, 50, 100), (5, 6, 12), (3, 0, 8)):
        terms = [cmath.exp(2j * math.pi * ((aj * m + a1 * m * m) % q) / q) for m in range(2 * q)]
        best = 0.0
        for i in range(q):
            acc = 0j
            for ell in range(1, q):
                acc += terms[i + ell - 1]
                best = max(best, abs(acc))
        assert incomplete_sup(a1, aj, q) == pytest.approx(best, abs=1e-10)
        assert incomplete_sup(a1, aj, q) <= weyl_incomplete_bound(q, DEFAULT_C0)


def test_propagate_pass_flags(p12, points12, bump):
    for pt in points12:
        r = propagate(pt, p12, bump)
        assert r.passed == (abs(r.amplitude) >= r.lower_bound_target)
        assert r.budget_ok == (r.e1_bound + r.e2_bound + r.e3_bound <= r.lower_bound_target)
        assert abs(r.amplitude) == pytest.approx(abs(r.lambda_factor * r.xi_factors[0]))
        assert r.main_term == pytest.approx(main_term(pt.cell.q, p12))


def test_points_csv_deterministic(tmp_path, p12, points12, bump):
    rows = [(pt, propagate(pt, p12, bump)) for pt in points12[:3]]
    write_points_csv(rows, p12, tmp_path / "a.csv")
    write_points_csv(rows, p12, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert float(back[0]["t"]) == points12[0].t
