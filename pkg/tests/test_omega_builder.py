import csv
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrolab.diophantine import totient
from schrolab.omega_builder import (
    OmegaCell,
    available_copies,
    build_cells,
    c1_prime,
    c_eps0,
    cell_count,
    choose_t,
    copy_scales,
    first_coord_measure,
    lift_to_omega_star,
    mc_generator,
    omega_measure,
    omega_size_lower_bound,
    omega_star_lower_bound,
    q_range,
    sample_eval_points,
    union_measure,
    union_measure_cells,
    union_measure_sweep,
    vitali_rescale_check,
    write_cells_csv,
    write_measure_csv,
)
from schrolab.wave_packet import ConstraintError, packet_params

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def p12():
    return packet_params(2, 1e12)


def tiny(n, Q, mu0, c3, c4):
    """A hand-sized instance: few denominators, boxes large enough to overlap across q."""
    base = packet_params(n, 1e12 if n == 2 else 1e15, strict=False)
    return replace(base, Q=float(Q), mu0=mu0, c3=c3, c4=c4, checks=())


def boxes_of(p):
    lo, hi = [], []
    for cell in build_cells(p):
        sides = cell.clipped_sides()
        lo.append([c + s[0] for c, s in zip(cell.center, sides)])
        hi.append([c + s[1] for c, s in zip(cell.center, sides)])
    return np.array(lo), np.array(hi)


# -- enumeration -------------------------------------------------------------


def test_q_range_example(p12):
    qs = q_range(p12)
    assert qs[0] == 4 and qs[-1] == 400
    assert all(q % 4 == 0 for q in qs) and len(qs) == 100


def test_cell_count_matches_enumeration():
    p = tiny(2, 5, 0.2, 0.1, 0.05)
    cells = list(build_cells(p))
    assert len(cells) == cell_count(p) == sum(totient(q) * q for q in q_range(p))
    p3 = tiny(3, 3, 0.3, 0.1, 0.001)
    assert len(list(build_cells(p3))) == sum(totient(q) * q * q for q in q_range(p3))


def test_cell_invariants():
    p = tiny(2, 5, 0.2, 0.1, 0.05)
    for c in build_cells(p):
        assert c.q % 4 == 0 and 4 * p.mu0 * p.Q <= c.q <= 4 * p.Q
        assert math.gcd(c.a1, c.q) == 1 and 1 <= c.a1 <= c.q
        assert all(a % 2 == 0 and 2 <= a <= 2 * c.q for a in c.a_prime)
        assert c.U == pytest.approx(math.pi * p.c3 / (4 * p.Q))
        assert c.V == pytest.approx(math.pi * p.c4 / (p.mu0 * p.Q * p.Q))


def test_cells_per_q_count():
    p = tiny(2, 5, 0.2, 0.1, 0.05)
    per = {}
    for c in build_cells(p):
        per[c.q] = per.get(c.q, 0) + 1
    assert per == {q: totient(q) * q for q in q_range(p)}


def test_small_Q_rejected():
    with pytest.raises(ConstraintError, match=r"Q >= 1/\(4 mu0\)"):
        next(build_cells(packet_params(2, 1e3, strict=False)))
    with pytest.raises(ConstraintError):
        omega_measure(packet_params(2, 1e3, strict=False))


def test_first_coord_measure(p12):
    for q in (4, 8, 100, 400):
        assert first_coord_measure(q, p12) == pytest.approx(totient(q) * 2 * p12.U, rel=1e-12)
    with pytest.raises(ValueError):
        first_coord_measure(6, p12)


def test_cell_measure_clipping():
    c = OmegaCell(4, 1, (8,), 0.1, 0.2)
    assert c.center[1] == pytest.approx(4 * math.pi)
    assert c.measure() == 0
    c = OmegaCell(4, 1, (4,), 0.1, 0.2)
    assert c.measure() == pytest.approx(0.2 * 0.2)


# -- exact measures against an independent union ----------------------------


@pytest.mark.parametrize(
    "Q,mu0,c3,c4",
    [(5, 0.2, 0.1, 0.01), (5, 0.2, 0.5, 0.15), (6, 0.1, 0.8, 0.12), (4, 0.25, 0.3, 0.2)],
)
def test_exact_n2_matches_box_union(Q, mu0, c3, c4):
    p = tiny(2, Q, mu0, c3, c4)
    got = omega_measure(p, "exact_product").value
    lo, hi = boxes_of(p)
    ref = union_measure_sweep(lo, hi)
    assert got == pytest.approx(ref, rel=1e-12)


def test_exact_n3_matches_box_union():
    p = tiny(3, 3, 0.3, 0.6, 0.005)
    assert 2 * p.V < TWO_PI / q_range(p)[-1] ** 2
    got = omega_measure(p, "exact_product").value
    lo, hi = boxes_of(p)
    assert got == pytest.approx(union_measure_sweep(lo, hi), rel=1e-12)


def test_exact_n3_refuses_overlapping_centres():
    p = tiny(3, 3, 0.3, 0.6, 0.2)
    with pytest.raises(ValueError):
        omega_measure(p, "exact_product")


def test_union_routes_agree():
    rng = np.random.Generator(np.random.Philox(21))
    for m in (1, 2, 3):
        for _ in range(10):
            k = int(rng.integers(1, 40))
            lo = rng.uniform(0, 1, (k, m))
            hi = lo + rng.uniform(0, 0.4, (k, m))
            assert union_measure(lo, hi) == pytest.approx(union_measure_sweep(lo, hi), rel=1e-12)


def test_union_trivial_cases():
    assert union_measure(np.zeros((1, 2)), np.ones((1, 2))) == 1
    lo = np.array([[0, 0], [0.5, 0.5]])
    assert union_measure(lo, lo + 1) == pytest.approx(1.75)
    assert union_measure(np.ones((1, 2)), np.zeros((1, 2))) == 0


def test_union_measure_cells():
    p = tiny(2, 5, 0.2, 0.5, 0.15)
    cells = [c for c in build_cells(p) if c.q <= 8]
    lo = np.array([[c + sd[0] for c, sd in zip(cell.center, cell.clipped_sides())] for cell in cells])
    hi = np.array([[c + sd[1] for c, sd in zip(cell.center, cell.clipped_sides())] for cell in cells])
    assert union_measure_cells(cells) == pytest.approx(union_measure_sweep(lo, hi), rel=1e-12)


def test_mc_within_three_ci():
    p = tiny(2, 5, 0.2, 0.5, 0.15)
    exact = omega_measure(p, "exact_product").value
    mc = omega_measure(p, "monte_carlo", samples=400_000, seed=3)
    assert abs(mc.value - exact) <= 3 * mc.ci_halfwidth
    assert mc.ci_halfwidth > 0


def test_mc_deterministic_and_streams():
    p = tiny(2, 5, 0.2, 0.5, 0.15)
    a = omega_measure(p, "monte_carlo", samples=50_000, seed=9, chunk=8192)
    b = omega_measure(p, "monte_carlo", samples=50_000, seed=9, chunk=8192)
    assert a == b
    x = mc_generator(1, 0).random(4)
    y = mc_generator(1, 1).random(4)
    assert not np.allclose(x, y)


def test_mc_n3_against_exact():
    p = tiny(3, 3, 0.3, 0.6, 0.005)
    exact = omega_measure(p, "exact_product").value
    mc = omega_measure(p, "monte_carlo", samples=1_000_000, seed=4)
    assert abs(mc.value - exact) <= 3 * mc.ci_halfwidth + 1e-12


def test_measure_bad_mode(p12):
    with pytest.raises(ValueError):
        omega_measure(p12, "bogus")
    with pytest.raises(ValueError):
        omega_measure(p12, "monte_carlo", samples=0)


def test_measure_lower_bound_desk(p12):
    res = omega_measure(p12)
    rhs = omega_size_lower_bound(p12)
    assert res.value >= rhs
    assert c_eps0(p12) > 0


def test_c_eps0_formula(p12):
    from schrolab.diophantine import omega_distinct

    brute = min(TWO_PI * 4**-0.1 * 2.0 ** -omega_distinct(q) * q**0.1 for q in q_range(p12))
    assert c_eps0(p12) == pytest.approx(brute, rel=1e-14)


# -- Vitali ------------------------------------------------------------------


def test_vitali_random_configurations():
    rng = np.random.Generator(np.random.Philox(5))
    for i in range(60):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 30))
        boxes = [(list(rng.uniform(0, 1, m)), float(rng.uniform(0.01, 0.3))) for _ in range(k)]
        c = float(rng.uniform(0.05, 0.95))
        chk = vitali_rescale_check(boxes, c, seed=i)
        assert chk["pass"] and chk.passed
        # the disjoint family gives a second lower bound for the shrunken union
        assert chk.lhs >= chk.vitali_sum * (1 - 1e-12)
        assert chk.vitali_sum >= chk.rhs * (1 - 1e-12)


def test_vitali_errors():
    with pytest.raises(ValueError):
        vitali_rescale_check([([0.0], 1.0)], 1.5)
    with pytest.raises(ValueError):
        vitali_rescale_check([([0.0] * 4, 1.0)], 0.5)
    assert vitali_rescale_check([], 0.5).passed


# -- lift and the choice of t ------------------------------------------------


def test_lift_invariants(p12):
    rng = np.random.Generator(np.random.Philox(12))
    cells = [OmegaCell(q, a1, (a2,), p12.U, p12.V) for q, a1, a2 in ((4, 1, 2), (100, 37, 50), (400, 399, 398))]
    for i, cell in enumerate(cells):
        for pt in lift_to_omega_star(cell, p12, copies=8, seed=i, offset_mode="uniform"):
            c1 = p12.c1
            assert -c1 <= pt.x[0] <= -c1 / 2 and abs(pt.x[1]) <= c1
            assert abs(pt.tau) <= p12.c2 / (p12.S1 * p12.R)
            assert pt.t == pytest.approx(-pt.x[0] / (2 * p12.R) + pt.tau, rel=1e-12)
            assert 0 < pt.t < 1
            # y_1 + s = 2 pi a1/q exactly in the exact representation
            assert pt.u[0] + float(pt.s_exact()) == 0
            assert pt.y[0] + pt.s == pytest.approx(TWO_PI * cell.a1 / cell.q, abs=1e-15)
            assert pt.turns_l2t == Fraction(cell.a1, cell.q) + pt.k[0]
            assert p12.L**2 * pt.t == pytest.approx(TWO_PI * float(pt.turns_l2t), rel=1e-12)
            assert p12.L * pt.x[1] == pytest.approx(TWO_PI * (cell.a_prime[0] / cell.q + pt.k[1]) + pt.u[1], rel=1e-9)


def test_choose_t_roundtrip(p12):
    for pt in sample_eval_points(p12, 30, seed=2):
        back = choose_t(pt.x, pt.cell, p12)
        assert back.k == pt.k
        # x holds roundings of the exact point; the offsets move by the rounding times the rescaling
        M1, L = copy_scales(p12)
        assert abs(back.u[0] - pt.u[0]) <= 2 * M1 * np.spacing(abs(pt.x[0]))
        assert abs(back.u[1] - pt.u[1]) <= 2 * L * np.spacing(abs(pt.x[1]))
        assert back.t == pytest.approx(pt.t, rel=1e-15)


def test_choose_t_rejects_outside_cell(p12):
    pt = sample_eval_points(p12, 1, seed=3)[0]
    other = OmegaCell(pt.cell.q, pt.cell.a1, ((pt.cell.a_prime[0] + 2) % (2 * pt.cell.q) or 2,), p12.U, p12.V)
    with pytest.raises(ConstraintError, match="offset outside"):
        choose_t(pt.x, other, p12)
    with pytest.raises(ValueError):
        choose_t(pt.x[:1], pt.cell, p12)


def test_lift_scale_failures_named():
    p = packet_params(2, 1e3, strict=False)
    cell = OmegaCell(4, 1, (2,), p.U, p.V)
    with pytest.raises(ConstraintError, match=r"L\^2/\(2R\) >= 4 pi/c1"):
        lift_to_omega_star(cell, p)
    with pytest.raises(ConstraintError):
        sample_eval_points(packet_params(2, 1e10), 3)


def test_copies_and_star_bound():
    for R in (2e10, 1e12, 2e13):
        p = packet_params(2, R)
        M1, L = copy_scales(p)
        K = available_copies(p)
        assert K[0] == math.floor(M1 * p.c1 / (4 * math.pi)) and K[1] == math.floor(L * p.c1 / math.pi)
        ratio = omega_star_lower_bound(p, 1.0)
        assert ratio >= c1_prime(p)
        assert ratio == pytest.approx(K[0] * K[1] * 2 * p.R / p.L**3, rel=1e-12)


def test_sampling_deterministic(p12):
    assert sample_eval_points(p12, 10, seed=4) == sample_eval_points(p12, 10, seed=4)
    pts = sample_eval_points(p12, 50, seed=5, offset_mode="center")
    assert all(pt.u == (0.0, 0.0) for pt in pts)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sampled_points_live_in_their_cells(seed):
    p = packet_params(2, 1e12)
    for pt in sample_eval_points(p, 3, seed=seed):
        (l1, h1), (l2, h2) = pt.cell.clipped_sides()
        assert l1 <= pt.u[0] <= h1 and l2 <= pt.u[1] <= h2


def test_csv_writers(tmp_path, p12):
    p = tiny(2, 5, 0.2, 0.1, 0.05)
    cells = list(build_cells(p))[:5]
    write_cells_csv(cells, tmp_path / "c.csv", 2)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["q", "a1", "a2", "U", "V"] and len(rows) == 6
    res = omega_measure(p12)
    write_measure_csv([(p12.Q, 2, res)], tmp_path / "m.csv")
    row = list(csv.DictReader(open(tmp_path / "m.csv")))[0]
    assert float(row["measure"]) == res.value
