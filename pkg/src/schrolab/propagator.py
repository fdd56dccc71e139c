"""Evaluation of (e^{it Delta} f)(x) on the constructed packets, with error budgets."""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .exponential_sums import PhaseTerm, phase_exp, weyl_envelope_w
from .omega_builder import EvalPoint
from .wave_packet import BumpProfile, PacketParams

TWO_PI = 2.0 * math.pi
_BITS = 40
_TAYLOR_Z = 2.0  # use the moment expansion while max |xi 2Lt (m - m_c)| <= this
_CONVERGENCE_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Phases of a point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointPhases:
    """Everything the factorized formula needs about (x, t).

    ``global_phase`` is R x_1 + R^2 t, ``b1`` is S1 (x_1 + 2 R t), ``a1`` is
    S1^2 t, ``lx`` holds L x_j and ``l2t`` holds L^2 t.
    """

    global_phase: PhaseTerm
    b1: float
    a1: float
    lx: tuple[PhaseTerm, ...]
    l2t: PhaseTerm
    x_prime: tuple[float, ...]
    t: float


def _phase_mpf(theta: mpmath.mpf) -> PhaseTerm:
    turns = theta / (2 * mpmath.pi)
    k = int(mpmath.nint(turns * (1 << _BITS)))
    rest = turns - mpmath.mpf(k) / (1 << _BITS)
    return PhaseTerm(Fraction(k, 1 << _BITS), float(2 * mpmath.pi * rest))


def phases_from_point(point: EvalPoint, params: PacketParams) -> PointPhases:
    lx = tuple(point.lx_phase(j) for j in range(1, params.n))
    return PointPhases(
        point.global_phase(params),
        point.first_offset(params),
        params.S1**2 * point.t,
        lx,
        point.l2t_phase(),
        point.x[1:],
        point.t,
    )


def phases_from_floats(x: Sequence[float], t: float, params: PacketParams) -> PointPhases:
    """Phases of a generic floating point (x, t), reduced in 40-digit arithmetic."""
    if len(x) != params.n:
        raise ValueError(f"x must have length {params.n}")
    with mpmath.workdps(40):
        R, S1, L = (mpmath.mpf(v) for v in (params.R, params.S1, params.L))
        x1, tt = mpmath.mpf(x[0]), mpmath.mpf(t)
        g = _phase_mpf(R * x1 + R * R * tt)
        b1 = float(S1 * (x1 + 2 * R * tt))
        lx = tuple(_phase_mpf(L * mpmath.mpf(v)) for v in x[1:])
        l2t = _phase_mpf(L * L * tt)
    return PointPhases(g, b1, params.S1**2 * float(t), lx, l2t, tuple(float(v) for v in x[1:]), float(t))


def _phases(point: EvalPoint | PointPhases, params: PacketParams) -> PointPhases:
    return point if isinstance(point, PointPhases) else phases_from_point(point, params)


# ---------------------------------------------------------------------------
# The factors
# ---------------------------------------------------------------------------


def _lambda_quad(ph: PointPhases, bump: BumpProfile, refine: int) -> complex:
    lam, w, hat = bump.hat_nodes(refine)
    val = np.dot(w * hat, np.exp(1j * (lam * ph.b1 + lam * lam * ph.a1))) / TWO_PI
    return complex(val) * ph.global_phase.exp()


def lambda_integral(
    point: EvalPoint | PointPhases,
    params: PacketParams,
    bump: BumpProfile,
    check_convergence: bool = False,
) -> complex:
    """e(R x_1 + R^2 t) (1/2pi) int phi_hat(lam) e(lam S1 (x_1 + 2Rt) + S1^2 t lam^2) d lam."""
    ph = _phases(point, params)
    val = _lambda_quad(ph, bump, 1)
    if check_convergence:
        _check(val, _lambda_quad(ph, bump, 2), "lambda integral")
    return val


def _check(a: complex, b: complex, what: str) -> None:
    if abs(a - b) > _CONVERGENCE_TOL * max(abs(a), abs(b), 1e-300):
        raise ConvergenceError(f"{what}: panel refinement changed the value by {abs(a - b):.3g}")


def _coupled_sum(coeffs: np.ndarray, m_lo: int, beta: float, xi: np.ndarray) -> np.ndarray:
    """sum_k c_k e^{i xi beta (m_lo + k)} for every node xi."""
    N = coeffs.size
    if N == 0:
        return np.zeros(xi.shape, dtype=np.complex128)
    half = (N - 1) / 2.0
    H = max(half, 1.0)
    z = float(np.max(np.abs(xi))) * abs(beta) * H
    centre = m_lo + half
    if z <= _TAYLOR_Z:
        # e^{i xi beta m} = e^{i xi beta m_c} sum_p (i xi beta H)^p/p! dhat^p
        d = (np.arange(N) - half) / H
        P, term = 1, 1.0
        while term > 1e-18 and P < 60:
            term *= z / P
            P += 1
        mom = np.empty(P, dtype=np.complex128)
        pw = coeffs.astype(np.complex128)
        for p in range(P):
            mom[p] = pw.sum()
            pw = pw * d
        s = 1j * xi * beta * H
        acc = np.zeros(xi.shape, dtype=np.complex128)
        for p in range(P - 1, -1, -1):  # Horner in s with 1/p! folded in
            acc = acc * s / (p + 1) + mom[p]
        return acc * np.exp(1j * xi * beta * centre)
    out = np.empty(xi.shape, dtype=np.complex128)
    k = np.arange(N) - half
    for start in range(0, xi.size, 64):
        sl = slice(start, start + 64)
        out[sl] = np.exp(1j * np.outer(xi[sl] * beta, k)) @ coeffs
    return out * np.exp(1j * xi * beta * centre)


def _xi_quad(idx: int, ph: PointPhases, params: PacketParams, bump: BumpProfile, refine: int, coeffs: np.ndarray) -> complex:
    xi, w, hat = bump.hat_nodes(refine)
    xj, t = ph.x_prime[idx], ph.t
    beta = 2.0 * params.L * t
    inner = _coupled_sum(coeffs, params.m_lo, beta, xi)
    return complex(np.dot(w * hat * np.exp(1j * (xi * xj + xi * xi * t)), inner)) / TWO_PI


def packet_coefficients(idx: int, ph: PointPhases, params: PacketParams) -> np.ndarray:
    m = np.arange(params.m_lo, params.m_hi, dtype=np.int64)
    return phase_exp(m, {2: ph.l2t, 1: ph.lx[idx]})


def xi_factor(
    j: int,
    point: EvalPoint | PointPhases,
    params: PacketParams,
    bump: BumpProfile,
    check_convergence: bool = False,
) -> complex:
    """(1/2pi) int phi_hat(xi) sum_m e(L m x_j + L^2 m^2 t) e(xi (x_j + 2 L m t)) e(xi^2 t) d xi, j = 2..n."""
    if not 2 <= j <= params.n:
        raise ValueError(f"j must lie in [2, {params.n}]")
    ph = _phases(point, params)
    coeffs = packet_coefficients(j - 2, ph, params)
    val = _xi_quad(j - 2, ph, params, bump, 1, coeffs)
    if check_convergence:
        _check(val, _xi_quad(j - 2, ph, params, bump, 2, coeffs), f"xi integral j={j}")
    return val


# ---------------------------------------------------------------------------
# Error budgets
# ---------------------------------------------------------------------------


def main_term(q: int, params: PacketParams) -> float:
    n = params.n
    return (1 - params.c0) ** n * (math.sqrt(2) * params.rho / math.sqrt(q)) ** (n - 1)


def lower_bound_target(params: PacketParams) -> float:
    n = params.n
    return 0.5 * (1 - params.c0) ** n * 2 ** (-(n - 1) / 2) * (params.rho / math.sqrt(params.Q)) ** (n - 1)


def error_budget_e1(point: EvalPoint | PointPhases, params: PacketParams, bump: BumpProfile, w_envelope: float) -> float:
    """(2^{n-1} - 1) |phi_hat|_1^{n-1} W^{n-1} |t|."""
    ph = _phases(point, params)
    n = params.n
    return (2 ** (n - 1) - 1) * bump.phi_hat_l1 ** (n - 1) * w_envelope ** (n - 1) * abs(ph.t)


def error_budget_e2(
    point: EvalPoint | PointPhases,
    params: PacketParams,
    bump: BumpProfile,
    sj_sup: float,
    sj_full: float | None = None,
) -> float:
    """sum_{l<n-1} C(n-1,l) (|phi|_inf |S_j(2R/L)|)^l (2R|t| |phi'|_inf sup_u |S_j(u)|)^{n-1-l}."""
    ph = _phases(point, params)
    n = params.n
    full = sj_sup if sj_full is None else sj_full
    a = bump.phi_inf * full
    b = 2 * params.R * abs(ph.t) * bump.phi_prime_inf * sj_sup
    return math.fsum(math.comb(n - 1, l) * a**l * b ** (n - 1 - l) for l in range(n - 1))


@lru_cache(maxsize=4096)
def incomplete_sup(a1: int, aj: int, q: int) -> float:
    """max over cyclic windows of length < q of |sum e(2 pi (aj m + a1 m^2)/q)|."""
    m = np.arange(2 * q, dtype=np.int64)
    terms = phase_exp(m, {2: PhaseTerm(Fraction(a1, q)), 1: PhaseTerm(Fraction(aj, q))})
    P = np.concatenate([[0], np.cumsum(terms)])
    i = np.arange(q)[:, None]
    L = np.arange(1, q)[None, :]
    return float(np.abs(P[i + L] - P[i]).max()) if q > 1 else 0.0


def weyl_incomplete_bound(q: int, C0: float) -> float:
    return 2 * C0 * math.sqrt(q) * math.sqrt(math.log(q))


@dataclass(frozen=True)
class E3Detail:
    total: float
    main: tuple[float, ...]
    e3_parts: tuple[float, ...]  # partial-summation terms, per coordinate
    e4_parts: tuple[float, ...]  # complete-sum and incomplete-sum terms, per coordinate
    implied_C3: float  # total / ((R/(L sqrt Q))^{n-1} (c4 + (R/L)^{-Delta0 eps1/2}))


def _rational_prefix_sup(a1: int, aj: int, q: int, params: PacketParams) -> float:
    m = np.arange(params.m_lo, params.m_hi, dtype=np.int64)
    terms = phase_exp(m, {2: PhaseTerm(Fraction(a1, q)), 1: PhaseTerm(Fraction(aj, q))})
    return float(np.abs(np.cumsum(terms)).max())


def e3_scale(params: PacketParams) -> float:
    n = params.n
    return (params.rho / math.sqrt(params.Q)) ** (n - 1) * (params.c4 + params.rho ** (-params.Delta0 * params.eps1 / 2))


def error_budget_e3_detail(point: EvalPoint, params: PacketParams, mode: str = "measured") -> E3Detail:
    """Per-denominator chain S_j -> S~_j -> floor(N/q) G -> sqrt(2) N / sqrt(q).

    ``measured`` uses exact incomplete-sum and prefix-sum maxima for this
    (a1, a_j, q); ``analytic`` uses the Weyl bound 2 C0 sqrt(q log q) instead.
    """
    if mode not in ("measured", "analytic"):
        raise ValueError(f"unknown mode {mode!r}")
    cell = point.cell
    q, N = cell.q, params.count
    main_j = math.sqrt(2) * N / math.sqrt(q)
    floor_part = (N // q) * math.sqrt(2 * q)
    mains, e3s, e4s = [], [], []
    for aj in cell.a_prime:
        inc = incomplete_sup(cell.a1, aj, q) if mode == "measured" else weyl_incomplete_bound(q, params.C0)
        e4 = abs(floor_part - main_j) + inc
        sup_tilde = _rational_prefix_sup(cell.a1, aj, q, params) if mode == "measured" else floor_part + inc
        e3 = cell.V * N * sup_tilde
        mains.append(main_j)
        e3s.append(e3)
        e4s.append(e4)
    total = math.prod(m + a + b for m, a, b in zip(mains, e3s, e4s)) - math.prod(mains)
    return E3Detail(total, tuple(mains), tuple(e3s), tuple(e4s), total / e3_scale(params))


def error_budget_e3(point: EvalPoint, params: PacketParams, mode: str = "measured") -> float:
    return error_budget_e3_detail(point, params, mode).total


def c3_chain(params: PacketParams) -> dict[str, float]:
    """Explicit instantiation of the constants behind the asymptotic E(3) bound."""
    n, mu0, D0 = params.n, params.mu0, params.Delta0
    A = (2 * mu0) ** -0.5  # sqrt(2) R/(L sqrt q) <= A R/(L sqrt Q) for q >= 4 mu0 Q
    c_log = (1 / (math.e * D0)) ** 0.5  # sup_q sqrt(log q) q^{-Delta0/2}
    c_prime = c_log * 4 ** ((1 + D0) / 2)
    c_dd = (2 * params.C0 + 2) * c_prime  # E_j(4) <= c_dd R/(L sqrt Q) Q^{-Delta0/2}
    c_ddd = A + c_dd  # sup_u |S~_j(u)| <= c_ddd R/(L sqrt Q)
    alpha = c_ddd * params.C3prime  # E_j(u;3) <= c4 alpha R/(L sqrt Q)
    k = max(alpha, c_dd)
    C3 = math.fsum(math.comb(n - 1, i) * A ** (n - 1 - i) * k**i for i in range(1, n))
    return {"A": A, "C_Delta0": c_log, "C_Delta0_mu0": c_prime, "C2prime": c_dd, "C3prime_sup": c_ddd, "alpha": alpha, "C3": C3}


def error_budget_e3_asymptotic(params: PacketParams) -> float:
    """C3 (R/(L sqrt Q))^{n-1} (c4 + (R/L)^{-Delta0 eps1/2}) with C3 from ``c3_chain``."""
    return c3_chain(params)["C3"] * e3_scale(params)


# ---------------------------------------------------------------------------
# Full evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropagationResult:
    amplitude: complex
    lambda_factor: complex
    xi_factors: tuple[complex, ...]
    main_term: float
    e1_bound: float
    e2_bound: float
    e3_bound: float
    lower_bound_target: float
    passed: bool
    budget_ok: bool  # e1 + e2 + e3 <= lower_bound_target
    w_envelope: float
    sj_sup: float


def _sj_stats(ph: PointPhases, params: PacketParams) -> tuple[float, float]:
    sup, full = 0.0, 0.0
    for idx in range(params.n - 1):
        pref = np.cumsum(packet_coefficients(idx, ph, params))
        sup = max(sup, float(np.abs(pref).max()) if pref.size else 0.0)
        full = max(full, float(abs(pref[-1])) if pref.size else 0.0)
    return sup, full


def propagate(
    point: EvalPoint,
    params: PacketParams,
    bump: BumpProfile,
    e3_mode: str = "measured",
    grid_size: int | None = None,
    check_convergence: bool = False,
) -> PropagationResult:
    ph = phases_from_point(point, params)
    lam = lambda_integral(ph, params, bump, check_convergence)
    xis = tuple(xi_factor(j, ph, params, bump, check_convergence) for j in range(2, params.n + 1))
    amp = lam * math.prod(xis)
    G = grid_size or max(1024, 1 << math.ceil(math.log2(8 * max(params.count, 1))))
    W = weyl_envelope_w(ph.l2t, params, G).upper
    sup, full = _sj_stats(ph, params)
    e1 = error_budget_e1(ph, params, bump, W)
    e2 = error_budget_e2(ph, params, bump, sup, full)
    e3 = error_budget_e3(point, params, e3_mode)
    target = lower_bound_target(params)
    return PropagationResult(
        amp,
        lam,
        xis,
        main_term(point.cell.q, params),
        e1,
        e2,
        e3,
        target,
        bool(abs(amp) >= target),
        bool(e1 + e2 + e3 <= target),
        W,
        sup,
    )


def propagate_floats(x: Sequence[float], t: float, params: PacketParams, bump: BumpProfile) -> complex:
    """Factorized amplitude at a generic (x, t), no budgets."""
    ph = phases_from_floats(x, t, params)
    val = lambda_integral(ph, params, bump)
    for j in range(2, params.n + 1):
        val *= xi_factor(j, ph, params, bump)
    return val


# ---------------------------------------------------------------------------
# Independent oracle
# ---------------------------------------------------------------------------

_BRUTE_LIMIT = 10**4


def brute_propagate(x: Sequence[float], t: float, params: PacketParams, bump: BumpProfile, nodes: int = 160) -> complex:
    """Unfactored evaluation: tensor quadrature over xi' and an explicit loop over m' tuples.

    Works in plain double precision, so it is only meaningful for small R.
    """
    n = params.n
    if len(x) != n:
        raise ValueError(f"x must have length {n}")
    tuples = params.count ** (n - 1)
    if tuples > _BRUTE_LIMIT:
        raise ValueError(f"{tuples} m' tuples exceeds the brute-force limit {_BRUTE_LIMIT}")
    g, w = np.polynomial.legendre.leggauss(nodes)
    # phi_hat lives on [-1/2, 1/2]: two panels split at its centre
    s = np.concatenate([(g - 1) / 4, (g + 1) / 4])
    ws = np.concatenate([w, w]) / 4
    hat = bump.phi_hat(s)
    R, S1, L = params.R, params.S1, params.L
    x1 = float(x[0])
    # coordinate 1 in global frequency xi_1 = R + S1 lam
    xi1 = R + S1 * s
    first = np.sum(ws * hat * np.exp(1j * (xi1 * x1 + xi1 * xi1 * t))) / TWO_PI
    # coordinates 2..n: all nodes at once, one term per m' tuple
    grids = np.meshgrid(*([s] * (n - 1)), indexing="ij")
    weight = np.ones_like(grids[0])
    for gj in np.meshgrid(*([ws * hat] * (n - 1)), indexing="ij"):
        weight = weight * gj
    xp = [float(v) for v in x[1:]]
    total = 0j
    for mp in itertools.product(range(params.m_lo, params.m_hi), repeat=n - 1):
        phase = np.zeros_like(grids[0])
        for j in range(n - 1):
            freq = grids[j] + L * mp[j]
            phase = phase + freq * xp[j] + freq * freq * t
        total += complex(np.sum(weight * np.exp(1j * phase)))
    return complex(first) * total / TWO_PI ** (n - 1)


# ---------------------------------------------------------------------------
# Reference phases in high precision (for robustness checks)
# ---------------------------------------------------------------------------


def reference_amplitude(point: EvalPoint, params: PacketParams, bump: BumpProfile, dps: int = 80) -> complex:
    """Same integrals, with every large phase formed from the exact point in ``dps`` digits."""
    cell = point.cell
    with mpmath.workdps(dps):
        two_pi = 2 * mpmath.pi
        R, L, S1 = (mpmath.mpf(v) for v in (params.R, params.L, params.S1))
        T = mpmath.mpf(cell.a1) / cell.q + point.k[0]
        z1 = two_pi * T + mpmath.mpf(point.u[0])
        x1 = -2 * R / L**2 * z1
        t = two_pi * T / L**2
        g = R * x1 + R * R * t
        g = float(g - two_pi * mpmath.nint(g / two_pi))
        b1 = float(S1 * (x1 + 2 * R * t))
        lx = []
        for j, a in enumerate(cell.a_prime, start=1):
            lx.append(two_pi * (mpmath.mpf(a) / cell.q + point.k[j]) + mpmath.mpf(point.u[j]))
        coeffs = []
        l2t = L * L * t
        for zj in lx:
            row = []
            for m in range(params.m_lo, params.m_hi):
                ph = m * zj + m * m * l2t
                ph = float(ph - two_pi * mpmath.nint(ph / two_pi))
                row.append(complex(math.cos(ph), math.sin(ph)))
            coeffs.append(np.array(row))
        t_f = float(t)
    lam, w, hat = bump.hat_nodes()
    val = complex(np.dot(w * hat, np.exp(1j * (lam * b1 + lam * lam * params.S1**2 * t_f)))) / TWO_PI
    val *= complex(math.cos(g), math.sin(g))
    beta = 2 * params.L * t_f
    k = np.arange(params.m_lo, params.m_hi, dtype=np.float64)
    for j, c in enumerate(coeffs, start=1):
        inner = np.exp(1j * beta * np.outer(lam, k)) @ c
        xj = point.x[j]
        val *= complex(np.dot(w * hat * np.exp(1j * (lam * xj + lam * lam * t_f)), inner)) / TWO_PI
    return val


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def point_row(point: EvalPoint, params: PacketParams, res: PropagationResult) -> list[str]:
    f = lambda v: "%.17g" % v  # noqa: E731
    return [
        str(params.n),
        f(params.R),
        str(point.cell.q),
        *[f(v) for v in point.x],
        f(point.t),
        f(abs(res.amplitude)),
        f(res.main_term),
        f(res.e1_bound),
        f(res.e2_bound),
        f(res.e3_bound),
        f(res.lower_bound_target),
        str(res.passed).lower(),
    ]


def point_header(n: int) -> list[str]:
    return ["n", "R", "q", *[f"x{j}" for j in range(1, n + 1)], "t", "amplitude", "main_term", "e1", "e2", "e3", "lower_bound_target", "passed"]


def write_points_csv(rows: Sequence[tuple[EvalPoint, PropagationResult]], params: PacketParams, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(point_header(params.n))
        for pt, res in rows:
            w.writerow(point_row(pt, params, res))
