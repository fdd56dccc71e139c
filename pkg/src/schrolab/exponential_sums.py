"""Quadratic exponential sums: Gauss sums, Weyl sums and the packet sums S_j.

Phases are carried as :class:`PhaseTerm` objects.  The rational part of a
phase is reduced exactly with integer arithmetic before any trigonometry is
done, so a phase like ``L**2 * m**2 * t`` of size 1e12 radians keeps full
accuracy as long as ``L**2 t`` has an exact rational decomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, NamedTuple, Sequence

import mpmath
import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .wave_packet import PacketParams

TWO_PI = 2.0 * math.pi

# int64 products x*y with x, y < _ODD_LIMIT stay below 2**63.
_ODD_LIMIT = 3_037_000_499
_TWO_ADIC_LIMIT = 64


def rational(num: int, den: int = 1) -> Fraction:
    """A reduced fraction num/den with den >= 1."""
    if den == 0:
        raise ZeroDivisionError("denominator must be nonzero")
    return Fraction(int(num), int(den))


class Convention(str, enum.Enum):
    RADIAN = "radian"  # e(x) = exp(i x)
    TWO_PI = "two_pi"  # exp(2 pi i x)


# ---------------------------------------------------------------------------
# Phase terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseTerm:
    """Phase ``2*pi*rational_part + residual`` (radians).

    ``rational_part`` is kept reduced to [0, 1).  Multiplying by an integer
    index and reducing is exact; only ``residual * m**p`` goes through
    floating point.
    """

    rational_part: Fraction = Fraction(0)
    residual: float = 0.0

    def __post_init__(self) -> None:
        r = Fraction(self.rational_part)
        object.__setattr__(self, "rational_part", r - math.floor(r))
        object.__setattr__(self, "residual", float(self.residual))

    @classmethod
    def from_turns(cls, x: float | Fraction, bits: int = 40) -> "PhaseTerm":
        """Phase 2*pi*x.  Floats are split exactly into a 2**-bits dyadic and a tiny rest."""
        if isinstance(x, Fraction):
            return cls(x, 0.0)
        x = float(x)
        scale = 1 << bits
        k = round(x * scale)
        # x*scale and k/scale are exact; the subtraction is exact by Sterbenz.
        rest = x - k / scale
        return cls(Fraction(k, scale), TWO_PI * rest)

    @classmethod
    def from_radians(cls, theta: float, *factors: float, bits: int = 40) -> "PhaseTerm":
        """Phase theta * factors[0] * ... (radians).

        The product and the split by 2*pi are done in 40-digit arithmetic, so
        the float inputs are used exactly.
        """
        with mpmath.workdps(40):
            prod = mpmath.mpf(float(theta))
            for f in factors:
                prod *= mpmath.mpf(float(f))
            turns = prod / (2 * mpmath.pi)
            k = int(mpmath.nint(turns * (1 << bits)))
            rest = turns - mpmath.mpf(k) / (1 << bits)
            return cls(Fraction(k, 1 << bits), float(2 * mpmath.pi * rest))

    def __add__(self, other: "PhaseTerm") -> "PhaseTerm":
        return PhaseTerm(self.rational_part + other.rational_part, self.residual + other.residual)

    def __neg__(self) -> "PhaseTerm":
        return PhaseTerm(-self.rational_part, -self.residual)

    def __sub__(self, other: "PhaseTerm") -> "PhaseTerm":
        return self + (-other)

    def scaled(self, k: int | Fraction) -> "PhaseTerm":
        """Exact multiple by an integer (or rational) factor."""
        return PhaseTerm(self.rational_part * k, self.residual * float(k))

    def reduced(self) -> "PhaseTerm":
        """Same phase with the residual folded into (-pi, pi]."""
        return PhaseTerm(self.rational_part, math.remainder(self.residual, TWO_PI))

    def angle(self) -> float:
        """Phase reduced to (-pi, pi]."""
        frac = float(self.rational_part)
        return math.remainder(TWO_PI * frac + math.remainder(self.residual, TWO_PI), TWO_PI)

    def exp(self) -> complex:
        a = self.angle()
        return complex(math.cos(a), math.sin(a))

    def exp_at(self, m: np.ndarray | Sequence[int] | int, power: int = 1) -> np.ndarray:
        """exp(i * phase * m**power) for integer indices m."""
        return phase_exp(m, {power: self})


def _split_rational(r: Fraction) -> list[Fraction]:
    """Partial fractions of r (mod 1): a 2-power part and an odd part."""
    num, den = r.numerator, r.denominator
    if den == 1:
        return []
    e = (den & -den).bit_length() - 1
    odd = den >> e
    if e == 0 or odd == 1:
        return [r - math.floor(r)]
    two = 1 << e
    u1 = (num * pow(odd, -1, two)) % two
    u2 = (num * pow(two, -1, odd)) % odd
    return [Fraction(u1, two), Fraction(u2, odd)]


def _power_frac(m: np.ndarray, r: Fraction, power: int) -> np.ndarray:
    """frac(r * m**power) as float64, computed by exact modular arithmetic."""
    out = np.zeros(m.shape, dtype=np.float64)
    for piece in _split_rational(r):
        num, den = piece.numerator, piece.denominator
        if den & (den - 1) == 0 and den.bit_length() - 1 <= _TWO_ADIC_LIMIT:
            # uint64 wraps mod 2**64, which is a multiple of den.
            mask = np.uint64(den - 1)
            x = m.astype(np.uint64)
            acc = np.full(m.shape, np.uint64(num), dtype=np.uint64)
            with np.errstate(over="ignore"):
                for _ in range(power):
                    acc = acc * x
            acc &= mask
            out += acc.astype(np.float64) / float(den)
        elif den < _ODD_LIMIT:
            x = np.mod(m, den).astype(np.int64)
            acc = np.full(m.shape, num % den, dtype=np.int64)
            for _ in range(power):
                acc = (acc * x) % den
            out += acc.astype(np.float64) / float(den)
        else:
            xs = [int(v) for v in m.ravel()]
            vals = [(num * pow(v, power, den)) % den for v in xs]
            out += np.array([Fraction(v, den).__float__() for v in vals]).reshape(m.shape)
    return out


def phase_exp(m: np.ndarray | Sequence[int] | int, coeffs: dict[int, PhaseTerm]) -> np.ndarray:
    """exp(i * sum_p theta_p * m**p) for integer m and PhaseTerm coefficients theta_p."""
    m = np.asarray(m, dtype=np.int64)
    if m.size and m.min() < 0:
        raise ValueError("indices must be nonnegative")
    frac = np.zeros(m.shape, dtype=np.float64)
    resid = np.zeros(m.shape, dtype=np.float64)
    mf = m.astype(np.float64)
    for p, term in coeffs.items():
        if p < 0:
            raise ValueError("negative power")
        if term.rational_part:
            frac += _power_frac(m, term.rational_part, p)
        if term.residual:
            resid += term.residual * mf**p
    frac -= np.floor(frac)
    angle = TWO_PI * frac + resid
    return np.exp(1j * angle)


# ---------------------------------------------------------------------------
# Gauss sums
# ---------------------------------------------------------------------------


class CaseTag(str, enum.Enum):
    ODD_Q = "odd_q"
    ZERO_CASE = "zero_case"
    DOUBLE_CASE = "double_case"


@dataclass(frozen=True)
class GaussSumValue:
    magnitude: float
    case_tag: CaseTag
    value: complex | None = None


def gauss_sum_closed(a: int, b: int, q: int) -> GaussSumValue:
    """|G(a, b; q)| from the three-case evaluation (magnitude only)."""
    if q <= 0:
        raise ValueError("q must be positive")
    if math.gcd(a, q) != 1:
        raise ValueError(f"gcd({a}, {q}) != 1")
    if q % 2 == 1:
        return GaussSumValue(math.sqrt(q), CaseTag.ODD_Q)
    b_odd = b % 2 == 1
    if (q % 4 == 2) != b_odd:
        # q = 2 mod 4 with b even, or q = 0 mod 4 with b odd
        return GaussSumValue(0.0, CaseTag.ZERO_CASE)
    return GaussSumValue(math.sqrt(2 * q), CaseTag.DOUBLE_CASE)


def _gauss_terms(a: int, b: int, q: int, m: np.ndarray) -> np.ndarray:
    # (m b + m^2 a) mod q in exact integer arithmetic, then one exp per term.
    a %= q
    b %= q
    if q < _ODD_LIMIT:
        mm = np.mod(m, q)
        r = (a * ((mm * mm) % q) + b * mm) % q
        return np.exp(1j * TWO_PI * (r.astype(np.float64) / q))
    r = np.array([(a * int(v) * int(v) + b * int(v)) % q for v in m], dtype=object)
    return np.exp(1j * TWO_PI * np.array([float(Fraction(int(v), q)) for v in r]))


def incomplete_gauss(a: int, b: int, q: int, u: int, u_prime: int) -> complex:
    """sum_{u <= m <= u'} exp(2 pi i (m b + m^2 a)/q)."""
    if q <= 0:
        raise ValueError("q must be positive")
    if not (1 <= u <= u_prime <= q) or u_prime - u >= q:
        raise ValueError(f"need 1 <= u <= u' <= q, got u={u}, u'={u_prime}, q={q}")
    m = np.arange(u, u_prime + 1, dtype=np.int64)
    return complex(_gauss_terms(a, b, q, m).sum())


def gauss_sum_brute(a: int, b: int, q: int) -> complex:
    """Complete quadratic Gauss sum over m = 1..q by direct summation."""
    if q <= 0:
        raise ValueError("q must be positive")
    return incomplete_gauss(a, b, q, 1, q)


def gauss_sums_all_b(a: int, q: int) -> np.ndarray:
    """G(a, b; q) for b = 0..q-1 at once, via one FFT over b."""
    m = np.arange(q, dtype=np.int64)
    seq = np.exp(1j * TWO_PI * (((a % q) * ((m * m) % q)) % q) / q)
    return np.fft.ifft(seq) * q


# ---------------------------------------------------------------------------
# Weyl sums
# ---------------------------------------------------------------------------


def _as_phase(coef: float | Fraction | PhaseTerm, convention: Convention | str) -> PhaseTerm:
    if isinstance(coef, PhaseTerm):
        return coef
    convention = Convention(convention)
    if convention is Convention.TWO_PI:
        return PhaseTerm.from_turns(coef)
    if isinstance(coef, Fraction):
        return PhaseTerm.from_radians(float(coef))
    return PhaseTerm.from_radians(coef)


def quadratic_weyl_sum(
    alpha: float | Fraction | PhaseTerm,
    beta: float | Fraction | PhaseTerm,
    M: int,
    N: int,
    convention: Convention | str = Convention.TWO_PI,
) -> complex:
    """sum_{M <= n < M+N} of exp(i f(n)) or exp(2 pi i f(n)), f(n) = alpha n^2 + beta n.

    Fractions and PhaseTerms are reduced exactly; a PhaseTerm already holds the
    phase in radians and ignores the convention.
    """
    if N < 1:
        raise ValueError("N must be positive")
    quad = _as_phase(alpha, convention)
    lin = _as_phase(beta, convention)
    if M >= 0:
        n = np.arange(M, M + N, dtype=np.int64)
        return complex(phase_exp(n, {2: quad, 1: lin}).sum())
    # shift to nonnegative indices: n = M + k
    const = quad.scaled(M * M) + lin.scaled(M)
    lin_k = quad.scaled(2 * M) + lin
    k = np.arange(N, dtype=np.int64)
    return complex(const.reduced().exp() * phase_exp(k, {2: quad, 1: lin_k}).sum())


def weyl_bound_rhs(q: int, N: int, C0: float) -> float:
    """C0 (N/sqrt(q) + sqrt(q)) sqrt(log q)."""
    if q < 2:
        raise ValueError("q must be at least 2")
    return C0 * (N / math.sqrt(q) + math.sqrt(q)) * math.sqrt(math.log(q))


def linear_sum_bound(theta: float, N: int) -> float:
    """min(N, 1/(2||theta||)) with ||.|| the distance to the nearest integer."""
    dist = abs(theta - round(theta))
    if dist == 0:
        return float(N)
    return min(float(N), 1.0 / (2.0 * dist))


class WeylTrial(NamedTuple):
    a: int
    q: int
    delta: float
    beta: float
    M: int
    N: int
    magnitude: float
    ratio: float


def weyl_trials(count: int, seed: int, q_max: int = 10**4, n_max: int = 10**5, m_max: int = 10**6) -> list[WeylTrial]:
    """Seeded random Weyl sums with alpha = a/q + delta, |delta| <= 1/q**2."""
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for _ in range(count):
        q = int(rng.integers(2, q_max + 1))
        while True:
            a = int(rng.integers(1, q))
            if math.gcd(a, q) == 1:
                break
        delta = float(rng.uniform(-1.0, 1.0)) / q**2
        beta = float(rng.random())
        M = int(rng.integers(0, m_max + 1))
        N = int(rng.integers(1, n_max + 1))
        d = PhaseTerm.from_turns(delta)
        alpha = PhaseTerm(Fraction(a, q) + d.rational_part, d.residual)
        mag = abs(quadratic_weyl_sum(alpha, beta, M, N))
        out.append(WeylTrial(a, q, delta, beta, M, N, mag, mag / weyl_bound_rhs(q, N, 1.0)))
    return out


def resonant_trials(q_max: int = 16, periods: int = 1000) -> list[WeylTrial]:
    """Exact rationals alpha = a/q, beta = b/q summed over whole periods.

    These are the worst cases for the Weyl ratio (complete sums of size sqrt(2q)).
    """
    out = []
    for q in range(2, q_max + 1):
        N = periods * q
        for a in range(1, q):
            if math.gcd(a, q) != 1:
                continue
            for b in range(q):
                mag = abs(quadratic_weyl_sum(Fraction(a, q), Fraction(b, q), 0, N))
                out.append(WeylTrial(a, q, 0.0, b / q, 0, N, mag, mag / weyl_bound_rhs(q, N, 1.0)))
    return out


def fit_weyl_constant(trials: Iterable[WeylTrial]) -> float:
    """Empirical C0: the largest observed Weyl ratio."""
    return max(t.ratio for t in trials)


# Frozen fit over weyl_trials(1000, seed=0) plus resonant_trials(); recomputed in tests.
DEFAULT_C0 = 1.696946653922116


# ---------------------------------------------------------------------------
# Packet sums S_j(u) and the envelope W(t)
# ---------------------------------------------------------------------------


def _packet_phases(x_j: float | PhaseTerm, t: float | PhaseTerm, params: "PacketParams") -> tuple[PhaseTerm, PhaseTerm]:
    lx = x_j if isinstance(x_j, PhaseTerm) else PhaseTerm.from_radians(params.L, x_j)
    l2t = t if isinstance(t, PhaseTerm) else PhaseTerm.from_radians(params.L, params.L, t)
    return lx, l2t


def packet_terms(x_j: float | PhaseTerm, t: float | PhaseTerm, params: "PacketParams", m_stop: int | None = None) -> np.ndarray:
    """The terms e(L m x_j + L^2 m^2 t) for m_lo <= m < m_stop."""
    lx, l2t = _packet_phases(x_j, t, params)
    stop = params.m_hi if m_stop is None else m_stop
    m = np.arange(params.m_lo, stop, dtype=np.int64)
    return phase_exp(m, {2: l2t, 1: lx})


def s_j_sum(x_j: float | PhaseTerm, t: float | PhaseTerm, u: float, params: "PacketParams") -> complex:
    """S_j(u) = sum_{R/L <= m < u} e(L m x_j + L^2 m^2 t), radian convention.

    ``x_j`` and ``t`` may be floats, or PhaseTerms holding the exact phases
    ``L x_j`` and ``L^2 t`` (as produced by the cell construction).
    """
    rho = params.rho
    if not (rho * (1 - 1e-12) <= u <= 2 * rho * (1 + 1e-12)):
        raise ValueError(f"u={u} outside [R/L, 2R/L] = [{rho}, {2 * rho}]")
    stop = min(max(math.ceil(u), params.m_lo), params.m_hi)
    if stop <= params.m_lo:
        return 0j
    return complex(packet_terms(x_j, t, params, stop).sum())


def s_full(x_prime: Sequence[float | PhaseTerm], t: float | PhaseTerm, u: float, params: "PacketParams") -> complex:
    """The (n-1)-fold sum S(u); the phase factorizes so this is a product of S_j(u)."""
    if len(x_prime) != params.n - 1:
        raise ValueError(f"expected {params.n - 1} coordinates, got {len(x_prime)}")
    out = 1 + 0j
    for xj in x_prime:
        out *= s_j_sum(xj, t, u, params)
    return out


class WEnvelope(NamedTuple):
    lower: float  # max of |sum| over the grid (a true lower bound for the sup)
    upper: float  # certified upper bound for the sup
    analytic: float | None  # 2 C0 (R/(L sqrt q)) sqrt(log q), when q and C0 are given


def _grid_max(coeffs: np.ndarray, G: int) -> float:
    if G >= coeffs.size:
        buf = np.zeros(G, dtype=np.complex128)
        buf[: coeffs.size] = coeffs
    else:
        # fold indices mod G; the grid values are unchanged
        pad = (-coeffs.size) % G
        buf = np.concatenate([coeffs, np.zeros(pad, dtype=np.complex128)]).reshape(-1, G).sum(axis=0)
    return float(np.abs(np.fft.fft(buf)).max())


def envelope_from_terms(coeffs: np.ndarray, grid_size: int) -> tuple[float, float]:
    """Grid max and certified sup of |sum_k c_k e^{ivk}| over v in [0, 2 pi]."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    N = coeffs.size
    if N == 0:
        return 0.0, 0.0
    half_degree = (N - 1) / 2.0
    k = np.arange(N)
    lip = float(np.sum(np.abs(coeffs) * np.abs(k - half_degree)))
    lower = _grid_max(coeffs, grid_size)
    upper = math.inf
    G = grid_size
    while True:
        gmax = lower if G == grid_size else _grid_max(coeffs, G)
        h = math.pi / G  # largest distance to the grid
        cand = gmax + h * lip  # Lipschitz bound
        if h * half_degree < 1:
            cand = min(cand, gmax / (1 - h * half_degree))  # Bernstein bound
        upper = min(upper, cand)
        if G % 2 or G // 2 < 2:
            break
        G //= 2
    return lower, max(upper, lower)


def weyl_envelope_w(
    t: float | PhaseTerm,
    params: "PacketParams",
    grid_size: int,
    q: int | None = None,
    C0: float | None = None,
) -> WEnvelope:
    """Certified estimate of W(t) = sup_v |sum_{R/L <= m < 2R/L} e(v m + L^2 m^2 t)|."""
    _, l2t = _packet_phases(0.0, t, params)
    m = np.arange(params.m_lo, params.m_hi, dtype=np.int64)
    coeffs = phase_exp(m, {2: l2t})
    lower, upper = envelope_from_terms(coeffs, grid_size)
    analytic = None
    if q is not None and C0 is not None and q >= 2:
        analytic = 2 * C0 * params.rho / math.sqrt(q) * math.sqrt(math.log(q))
    return WEnvelope(lower, upper, analytic)
