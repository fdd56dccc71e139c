"""The arithmetic set Omega in the torus, its lift Omega*, and the per-point time t."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .diophantine import omega_distinct, totient, totient_sieve
from .exponential_sums import PhaseTerm
from .wave_packet import ConstraintError, PacketParams

TWO_PI = 2.0 * math.pi
_ROUND = 1e-9  # relative slack when re-deriving offsets from floating x


@dataclass(frozen=True)
class OmegaCell:
    q: int
    a1: int
    a_prime: tuple[int, ...]
    U: float
    V: float

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(TWO_PI * a / self.q for a in (self.a1,) + self.a_prime)

    def clipped_sides(self) -> list[tuple[float, float]]:
        """Offset ranges (lo, hi) per coordinate of the box intersected with [0, 2 pi]."""
        out = []
        for i, c in enumerate(self.center):
            r = self.U if i == 0 else self.V
            out.append((max(-r, -c), min(r, TWO_PI - c)))
        return out

    def measure(self) -> float:
        return math.prod(max(hi - lo, 0.0) for lo, hi in self.clipped_sides())


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

_PRE_CHECKS = (
    "Q >= 1/(4 mu0)",
    "R/L >= Q^(1+Delta0)",
    "Q >= (R/L)^eps1",
    "1/Q <= L^2/(S1 R)",
    "pi/(mu0 Q Q^(1/(n-1))) <= C3'/(R/L)",
)


def q_range(params: PacketParams) -> list[int]:
    """Admissible denominators: multiples of 4 in [4 mu0 Q, 4 Q]."""
    lo = max(4, 4 * math.ceil(params.mu0 * params.Q * (1 - 1e-12)))
    hi = 4 * math.floor(params.Q * (1 + 1e-12))
    return list(range(lo, hi + 1, 4))


def _require(params: PacketParams) -> None:
    failed = [c for c in params.checks if c.name in _PRE_CHECKS and not c.ok]
    if failed:
        msg = "; ".join(f"{c.name} fails ({c.lhs:.6g} vs {c.rhs:.6g})" for c in failed)
        raise ConstraintError(msg)
    if not q_range(params):
        raise ConstraintError("Q >= 1/(4 mu0) fails: empty q-range")


def cell_arrays(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(a1 values, grid of a' rows) for one denominator; cells are their product."""
    a = np.arange(1, q + 1)
    a1 = a[np.gcd(a, q) == 1]
    evens = np.arange(2, 2 * q + 1, 2)
    grid = np.stack(np.meshgrid(*([evens] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    return a1, grid


def cell_count(params: PacketParams) -> int:
    return sum(totient(q) * q ** (params.n - 1) for q in q_range(params))


def build_cells(params: PacketParams) -> Iterator[OmegaCell]:
    """Stream every cell (q, a1, a') in a fixed order."""
    _require(params)
    U, V = params.U, params.V
    for q in q_range(params):
        a1s, grid = cell_arrays(q, params.n)
        rows = [tuple(int(v) for v in r) for r in grid]
        for a1 in a1s:
            for ap in rows:
                yield OmegaCell(q, int(a1), ap, U, V)


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


def _union_length(lo: np.ndarray, hi: np.ndarray) -> float:
    """Measure of a union of intervals (sweep over sorted left ends)."""
    if lo.size == 0:
        return 0.0
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    # a new component starts where the left end passes everything before it
    start = np.concatenate([[True], lo[1:] > reach[:-1]])
    idx = np.flatnonzero(start)
    ends = np.concatenate([reach[idx[1:] - 1], [reach[-1]]])
    return float(math.fsum(ends - lo[idx]))


def _first_coord_intervals(q: int, U: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.arange(1, q + 1)
    c = TWO_PI * a[np.gcd(a, q) == 1] / q
    return np.clip(c - U, 0.0, TWO_PI), np.clip(c + U, 0.0, TWO_PI)


def first_coord_measure(q: int, params: PacketParams) -> float:
    """|union over coprime a1 of (2 pi a1/q - U, 2 pi a1/q + U)| inside [0, 2 pi]."""
    if q < 1 or q % 4:
        raise ValueError(f"q={q} is not admissible")
    return _union_length(*_first_coord_intervals(q, params.U))


def c_eps0(params: PacketParams) -> float:
    """2 pi 4^{-eps0} min_q 2^{-omega(q)} q^{eps0} over the admissible q."""
    e = params.eps0
    return TWO_PI * 4.0**-e * min(2.0 ** -omega_distinct(q) * q**e for q in q_range(params))


def omega_size_lower_bound(params: PacketParams) -> float:
    n = params.n
    return (
        c_eps0(params)
        * params.c3
        * params.c4 ** (n - 1)
        * 3.0 ** -(n - 1)
        * 2.0**-n
        * params.mu0
        * params.Q**-params.eps0
    )


@dataclass(frozen=True)
class MeasureResult:
    value: float
    ci_halfwidth: float
    mode: str
    samples: int
    seed: int | None
    note: str = ""


class _FirstCoordUnion:
    """|union of A_q over admissible q divisible by some d in D|, cached by D."""

    def __init__(self, qs: list[int], U: float):
        self.qs = qs
        self.U = U
        self._iv = {q: _first_coord_intervals(q, U) for q in qs}
        self._cache: dict[tuple[int, ...], float] = {}

    def measure(self, divisors: Sequence[int]) -> float:
        ds = sorted(set(divisors))
        # drop d that are multiples of a smaller member
        keep = tuple(d for i, d in enumerate(ds) if not any(d % e == 0 for e in ds[:i]))
        if keep not in self._cache:
            sel = [q for q in self.qs if any(q % d == 0 for d in keep)]
            if not sel:
                self._cache[keep] = 0.0
            else:
                lo = np.concatenate([self._iv[q][0] for q in sel])
                hi = np.concatenate([self._iv[q][1] for q in sel])
                self._cache[keep] = _union_length(lo, hi)
        return self._cache[keep]


def _centre_groups(qs: list[int], n: int, V: float, limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rational centres a'/q (reduced) hitting [0, 2 pi]^{n-1}, with their divisor d.

    All boxes sharing a centre coincide, and the q admitting a given centre
    alpha/beta are exactly the admissible multiples of d = lcm(4, beta') with
    beta' = 2 beta if some alpha_j is odd and beta otherwise.
    """
    total = sum((q // 2) ** (n - 1) for q in qs)
    if total > limit:
        raise ValueError(f"exact mode would enumerate {total} centres (limit {limit}); use monte_carlo")
    nums, dens = [], []
    for q in qs:
        # centres at or beyond 2 pi + V never meet [0, 2 pi]
        ev = np.arange(2, 2 * q + 1, 2)
        ev = ev[TWO_PI * ev / q - V < TWO_PI]
        grid = np.stack(np.meshgrid(*([ev] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
        g = reduce(np.gcd, [grid[:, j] for j in range(n - 1)], np.full(grid.shape[0], q))
        nums.append(grid // g[:, None])
        dens.append(q // g)
    num = np.concatenate(nums)
    den = np.concatenate(dens)
    key = np.concatenate([den[:, None], num], axis=1)
    key = np.unique(key, axis=0)
    den, num = key[:, 0], key[:, 1:]
    odd = np.any(num % 2 == 1, axis=1)
    beta = np.where(odd, 2 * den, den)
    d = np.lcm(4, beta)
    return num / den[:, None], d


def _exact_n2(params: PacketParams, union: _FirstCoordUnion, qs: list[int]) -> float:
    V = params.V
    ratio, d = _centre_groups(qs, 2, V, 10**8)
    c = TWO_PI * ratio[:, 0]
    lo, hi = np.clip(c - V, 0, TWO_PI), np.clip(c + V, 0, TWO_PI)
    order = np.argsort(lo, kind="stable")
    lo, hi, d = lo[order], hi[order], d[order]
    total = []
    if lo.size < 2 or np.all(lo[1:] >= np.maximum.accumulate(hi)[:-1]):  # no overlaps
        lens = hi - lo
        for dd in np.unique(d):
            total.append(float(math.fsum(lens[d == dd])) * union.measure([int(dd)]))
        return math.fsum(total)
    events = sorted([(float(a), 1, int(k)) for a, k in zip(lo, d)] + [(float(b), -1, int(k)) for b, k in zip(hi, d)])
    active: dict[int, int] = {}
    prev = None
    for x, kind, k in events:
        if prev is not None and x > prev and active:
            total.append((x - prev) * union.measure(list(active)))
        if kind == 1:
            active[k] = active.get(k, 0) + 1
        else:
            active[k] -= 1
            if not active[k]:
                del active[k]
        prev = x
    return math.fsum(total)


def _exact_nd(params: PacketParams, union: _FirstCoordUnion, qs: list[int], limit: int) -> float:
    n, V = params.n, params.V
    # distinct centre vectors differ by >= 2 pi/(q q') in some coordinate
    if 2 * V >= TWO_PI / (qs[-1] ** 2):
        raise ValueError("boxes of distinct centres may overlap; exact mode needs n = 2 here, use monte_carlo")
    ratio, d = _centre_groups(qs, n, V, limit)
    c = TWO_PI * ratio
    side = np.clip(c + V, 0, TWO_PI) - np.clip(c - V, 0, TWO_PI)
    vol = np.prod(side, axis=1)
    return math.fsum(float(math.fsum(vol[d == dd])) * union.measure([int(dd)]) for dd in np.unique(d))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SCHROLAB_THREADS", "1")))
    except ValueError:
        return 1


def mc_generator(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator; stream i is the seed's Philox state jumped i times."""
    return np.random.Generator(np.random.Philox(seed).jumped(stream))


def _mc_chunk(params: PacketParams, qs: list[int], n_samples: int, seed: int, stream: int) -> int:
    rng = mc_generator(seed, stream)
    y = rng.random((n_samples, params.n)) * TWO_PI
    hit = np.zeros(n_samples, dtype=bool)
    U, V = params.U, params.V
    for q in qs:
        ok = ~hit
        for j in range(1, params.n):
            yj = y[:, j]
            aj = 2 * np.rint(yj * q / (2 * TWO_PI))
            ok &= (aj >= 2) & (aj <= 2 * q) & (np.abs(yj - TWO_PI * aj / q) < V)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            continue
        y1 = y[idx, 0]
        a1 = np.rint(y1 * q / TWO_PI).astype(np.int64)
        good = (a1 >= 1) & (a1 <= q) & (np.gcd(a1, q) == 1) & (np.abs(y1 - TWO_PI * a1 / q) < U)
        hit[idx[good]] = True
    return int(hit.sum())


def omega_measure(
    params: PacketParams,
    mode: str = "exact_product",
    samples: int = 10**6,
    seed: int = 0,
    chunk: int = 1 << 16,
    centre_limit: int = 2 * 10**7,
) -> MeasureResult:
    """|Omega| inside [0, 2 pi]^n, exactly (n <= 3) or by Monte Carlo."""
    _require(params)
    qs = q_range(params)
    if params.V >= math.pi / qs[-1]:
        raise ValueError("V >= pi/q: boxes of one denominator overlap")
    if mode == "exact_product":
        if params.n > 3:
            raise ValueError("exact_product is available for n <= 3")
        union = _FirstCoordUnion(qs, params.U)
        if params.n == 2:
            val = _exact_n2(params, union, qs)
        else:
            val = _exact_nd(params, union, qs, centre_limit)
        note = "exact: boxes grouped by reduced centre, cross-q unions by divisibility classes"
        return MeasureResult(val, 0.0, mode, 0, None, note)
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if samples <= 0:
        raise ValueError("samples must be positive")
    sizes = [chunk] * (samples // chunk) + ([samples % chunk] if samples % chunk else [])
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        hits = sum(ex.map(lambda a: _mc_chunk(params, qs, a[1], seed, a[0]), enumerate(sizes)))
    vol = TWO_PI**params.n
    p = hits / samples
    ci = 1.96 * vol * math.sqrt(p * (1 - p) / samples)
    return MeasureResult(p * vol, ci, mode, samples, seed, "uniform Monte Carlo over [0, 2 pi]^n")


def union_measure_cells(cells: Sequence[OmegaCell]) -> float:
    """Exact measure of a (small) union of clipped cell boxes."""
    lo = np.array([[c + s[0] for c, s in zip(cell.center, cell.clipped_sides())] for cell in cells])
    hi = np.array([[c + s[1] for c, s in zip(cell.center, cell.clipped_sides())] for cell in cells])
    return union_measure(lo, hi)


# ---------------------------------------------------------------------------
# Exact unions of boxes and the Vitali rescaling check
# ---------------------------------------------------------------------------


def union_measure(lo: np.ndarray, hi: np.ndarray) -> float:
    """|union of boxes prod [lo_k, hi_k]| by a difference array on the compressed grid."""
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    keep = np.all(hi > lo, axis=1)
    lo, hi = lo[keep], hi[keep]
    if lo.shape[0] == 0:
        return 0.0
    m = lo.shape[1]
    if m == 1:
        return _union_length(lo[:, 0], hi[:, 0])
    axes = [np.unique(np.concatenate([lo[:, k], hi[:, k]])) for k in range(m)]
    ilo = [np.searchsorted(axes[k], lo[:, k]) for k in range(m)]
    ihi = [np.searchsorted(axes[k], hi[:, k]) for k in range(m)]
    widths = [np.diff(a) for a in axes]
    # sweep the first axis; the remaining axes use a difference array per slab
    rest = tuple(a.size for a in axes[1:])
    diff = np.zeros(rest, dtype=np.int64)
    starts = [[] for _ in range(axes[0].size)]
    for b in range(lo.shape[0]):
        starts[ilo[0][b]].append((b, 1))
        starts[ihi[0][b]].append((b, -1))
    corners = np.array(np.meshgrid(*([[0, 1]] * (m - 1)), indexing="ij")).reshape(m - 1, -1).T
    total = []
    cell_vol = reduce(np.multiply.outer, widths[1:]) if m > 2 else widths[1]
    for i in range(axes[0].size - 1):
        for b, sign in starts[i]:
            for cor in corners:
                idx = tuple(ihi[k + 1][b] if cor[k] else ilo[k + 1][b] for k in range(m - 1))
                diff[idx] += sign * (-1) ** int(cor.sum())
        cover = diff
        for k in range(m - 1):
            cover = np.cumsum(cover, axis=k)
        covered = cover[tuple(slice(0, s - 1) for s in rest)] > 0
        total.append(widths[0][i] * float(cell_vol[covered].sum()))
    return math.fsum(total)


def union_measure_sweep(lo: np.ndarray, hi: np.ndarray) -> float:
    """Independent route: recursive slab sweep with 1-D interval merging at the bottom."""
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    keep = np.all(hi > lo, axis=1)
    lo, hi = lo[keep], hi[keep]
    if lo.shape[0] == 0:
        return 0.0
    if lo.shape[1] == 1:
        return _union_length(lo[:, 0], hi[:, 0])
    xs = np.unique(np.concatenate([lo[:, 0], hi[:, 0]]))
    parts = []
    for a, b in zip(xs[:-1], xs[1:]):
        mid = 0.5 * (a + b)
        act = (lo[:, 0] < mid) & (hi[:, 0] > mid)
        if act.any():
            parts.append((b - a) * union_measure_sweep(lo[act, 1:], hi[act, 1:]))
    return math.fsum(parts)


@dataclass(frozen=True)
class VitaliCheck:
    lhs: float
    rhs: float
    passed: bool
    vitali_sum: float  # c^m times the total volume of a greedy disjoint subfamily

    def __getitem__(self, key: str):  # dict-style access: check["pass"]
        return self.passed if key == "pass" else getattr(self, key)


def vitali_rescale_check(boxes: Sequence[tuple[Sequence[float], float]], c: float, seed: int = 0) -> VitaliCheck:
    """Compare |union B_j*| with c^m 3^-m |union B_j| for cubes (centre, side)."""
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if not boxes:
        return VitaliCheck(0.0, 0.0, True, 0.0)
    centres = np.array([np.asarray(b[0], dtype=np.float64) for b in boxes])
    sides = np.array([float(b[1]) for b in boxes])
    m = centres.shape[1]
    if not 1 <= m <= 3 or len(boxes) > 200:
        raise ValueError("need 1 <= m <= 3 and at most 200 boxes")
    half = sides[:, None] / 2
    full = union_measure(centres - half, centres + half)
    star = union_measure(centres - c * half, centres + c * half)
    # greedy Vitali selection, largest first, ties in seeded random order
    rng = np.random.Generator(np.random.Philox(seed))
    order = np.lexsort((rng.permutation(len(boxes)), -sides))
    chosen: list[int] = []
    for i in order:
        if all(np.any(np.abs(centres[i] - centres[j]) >= (sides[i] + sides[j]) / 2) for j in chosen):
            chosen.append(int(i))
    vsum = c**m * math.fsum(sides[chosen] ** m)
    rhs = c**m * 3.0**-m * full
    return VitaliCheck(star, rhs, bool(star >= rhs * (1 - 1e-12)), vsum)


# ---------------------------------------------------------------------------
# The lift Omega* and the choice of t
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalPoint:
    """A point x of Omega* with its time t.

    The exact point is y_1 = 2 pi a1/q + u_1, y_j = 2 pi a_j/q + u_j with
    window shifts k, x_1 = -(2R/L^2)(y_1 + 2 pi k_1), x_j = (y_j + 2 pi k_j)/L,
    s = -u_1 and t = -x_1/(2R) + s/L^2.  The float fields are roundings of
    these; the phase helpers below use the exact form.
    """

    x: tuple[float, ...]
    cell: OmegaCell
    t: float
    tau: float
    s: float
    y: tuple[float, ...]
    k: tuple[int, ...]
    u: tuple[float, ...]

    @property
    def turns_l2t(self) -> Fraction:
        """L^2 t / (2 pi) = a1/q + k_1, exactly."""
        return Fraction(self.cell.a1, self.cell.q) + self.k[0]

    def l2t_phase(self) -> PhaseTerm:
        return PhaseTerm(self.turns_l2t, 0.0)

    def lx_phase(self, j: int) -> PhaseTerm:
        """L x_j as a phase, j = 1..n-1 indexing the coordinates after the first."""
        return PhaseTerm(Fraction(self.cell.a_prime[j - 1], self.cell.q), self.u[j])

    def global_phase(self, params: PacketParams) -> PhaseTerm:
        """R x_1 + R^2 t = -2 pi rho^2 (a1/q + k_1) - 2 rho^2 u_1."""
        rho2 = params.rho_exact**2
        return PhaseTerm(-rho2 * self.turns_l2t, -2.0 * float(rho2) * self.u[0])

    def first_offset(self, params: PacketParams) -> float:
        """S1 (x_1 + 2 R t) = -2 S1 R u_1 / L^2."""
        return -2.0 * params.S1 * params.R * self.u[0] / params.L**2

    def s_exact(self) -> Fraction:
        return -Fraction(self.u[0])


def copy_scales(params: PacketParams) -> tuple[float, float]:
    return params.L**2 / (2 * params.R), params.L


def available_copies(params: PacketParams) -> tuple[int, ...]:
    """Disjoint 2 pi windows: floor(M1 c1/(4 pi)) in coordinate 1, floor(L c1/pi) in the others."""
    M1, L = copy_scales(params)
    k1 = math.floor(M1 * params.c1 / (2 * TWO_PI))
    kj = math.floor(L * params.c1 / math.pi)
    return (k1,) + (kj,) * (params.n - 1)


def c1_prime(params: PacketParams) -> float:
    c1 = params.c1
    return (c1 / (8 * math.pi)) * (c1 / TWO_PI) ** (params.n - 1)


def omega_star_lower_bound(params: PacketParams, omega: float) -> float:
    """|Omega*| >= |Omega| (K_1/M_1) prod_j (K_j/L) from the disjoint window copies."""
    M1, L = copy_scales(params)
    K = available_copies(params)
    return omega * (K[0] / M1) * math.prod(k / L for k in K[1:])


def _lift_checks(params: PacketParams) -> list[str]:
    M1, L = copy_scales(params)
    bad = []
    if M1 < 2 * TWO_PI / params.c1:
        bad.append(f"L^2/(2R) >= 4 pi/c1 fails ({M1:.6g} vs {2 * TWO_PI / params.c1:.6g})")
    if L < 2 * TWO_PI / params.c1:
        bad.append(f"L >= 4 pi/c1 fails ({L:.6g} vs {2 * TWO_PI / params.c1:.6g})")
    return bad


def _exact_x(cell: OmegaCell, k: Sequence[int], u: Sequence[float], params: PacketParams) -> tuple[float, ...]:
    with mpmath.workdps(40):
        two_pi = 2 * mpmath.pi
        z1 = two_pi * (mpmath.mpf(cell.a1) / cell.q + k[0]) + mpmath.mpf(u[0])
        xs = [float(-2 * mpmath.mpf(params.R) / mpmath.mpf(params.L) ** 2 * z1)]
        for j, a in enumerate(cell.a_prime, start=1):
            zj = two_pi * (mpmath.mpf(a) / cell.q + k[j]) + mpmath.mpf(u[j])
            xs.append(float(zj / mpmath.mpf(params.L)))
    return tuple(xs)


def _make_point(cell: OmegaCell, k: Sequence[int], u: Sequence[float], params: PacketParams) -> EvalPoint:
    """Build the exact point and verify every constraint on it."""
    bad = [f"parameter constraint {name} fails" for name in params.violations]
    bad += _lift_checks(params)
    x = _exact_x(cell, k, u, params)
    with mpmath.workdps(40):
        t = float(2 * mpmath.pi * (mpmath.mpf(cell.a1) / cell.q + k[0]) / mpmath.mpf(params.L) ** 2)
    s = -float(u[0])
    tau = s / params.L**2
    y = tuple(c + ui for c, ui in zip(cell.center, u))
    c1 = params.c1
    tol = 1e-12
    if not (-c1 * (1 + tol) <= x[0] <= -c1 / 2 * (1 - tol)):
        bad.append(f"x_1 in [-c1, -c1/2] fails (x_1 = {x[0]:.6g})")
    for j, xj in enumerate(x[1:], start=2):
        if abs(xj) > c1 * (1 + tol):
            bad.append(f"|x_{j}| <= c1 fails (x_{j} = {xj:.6g})")
    if abs(u[0]) > cell.U * (1 + _ROUND) or any(abs(v) > cell.V * (1 + _ROUND) for v in u[1:]):
        bad.append("offset outside the cell box")
    tau_cap = params.c2 / (params.S1 * params.R)
    if abs(tau) > tau_cap:
        bad.append(f"|tau| <= c2/(S1 R) fails ({abs(tau):.6g} vs {tau_cap:.6g})")
    if not 0 < t < 1:
        bad.append(f"0 < t < 1 fails (t = {t:.6g})")
    cap1 = params.c0 / (4 * params.phi_hat_l1 * params.S1**2)
    if t > cap1:
        bad.append(f"t <= c0/(4 |phi_hat|_1 S1^2) fails ({t:.6g} vs {cap1:.6g})")
    cap2 = params.delta0 / (8 * params.R)
    if t > cap2:
        bad.append(f"t <= delta0/(8R) fails ({t:.6g} vs {cap2:.6g})")
    if bad:
        raise ConstraintError("; ".join(bad))
    return EvalPoint(x, cell, t, tau, s, y, tuple(int(v) for v in k), tuple(float(v) for v in u))


def choose_t(x: Sequence[float], cell: OmegaCell, params: PacketParams) -> EvalPoint:
    """Pick t so that y_1 + s = 2 pi a1/q, with y read off from x via the rescaling."""
    if len(x) != params.n:
        raise ValueError(f"x must have length {params.n}")
    bad = _lift_checks(params) + [f"parameter constraint {name} fails" for name in params.violations]
    if bad:
        raise ConstraintError("; ".join(bad))
    ks, us = [], []
    with mpmath.workdps(40):
        two_pi = 2 * mpmath.pi
        zs = [-mpmath.mpf(x[0]) * mpmath.mpf(params.L) ** 2 / (2 * mpmath.mpf(params.R))]
        zs += [mpmath.mpf(v) * mpmath.mpf(params.L) for v in x[1:]]
        for z, a in zip(zs, (cell.a1,) + cell.a_prime):
            base = two_pi * mpmath.mpf(a) / cell.q
            k = int(mpmath.nint((z - base) / two_pi))
            ks.append(k)
            us.append(float(z - base - two_pi * k))
    return _make_point(cell, ks, us, params)


def _offsets(cell: OmegaCell, rng: np.random.Generator | None) -> list[float]:
    if rng is None:
        return [0.0] * (len(cell.a_prime) + 1)
    return [float(rng.uniform(lo, hi)) for lo, hi in cell.clipped_sides()]


def _window_shift(y: float, start: float) -> int:
    return math.ceil((start - y) / TWO_PI)


def _lift(cell: OmegaCell, params: PacketParams, windows: Sequence[int], u: Sequence[float]) -> EvalPoint:
    M1, L = copy_scales(params)
    c = cell.center
    y = [ci + ui for ci, ui in zip(c, u)]
    k = [_window_shift(y[0], M1 * params.c1 / 2 + TWO_PI * windows[0])]
    for j in range(1, params.n):
        k.append(_window_shift(y[j], -L * params.c1 + TWO_PI * windows[j]))
    return _make_point(cell, k, u, params)


def lift_to_omega_star(
    cell: OmegaCell,
    params: PacketParams,
    copies: int = 1,
    seed: int = 0,
    offset_mode: str = "center",
) -> list[EvalPoint]:
    """Pull the cell back to x-space, one point per requested window copy."""
    if copies < 1:
        raise ValueError("copies must be positive")
    bad = _lift_checks(params)
    if bad:
        raise ConstraintError("; ".join(bad))
    if offset_mode not in ("center", "uniform"):
        raise ValueError(f"unknown offset_mode {offset_mode!r}")
    K = available_copies(params)
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for i in range(copies):
        windows = [0] * params.n if i == 0 else [int(rng.integers(kk)) for kk in K]
        u = _offsets(cell, rng if offset_mode == "uniform" else None)
        out.append(_lift(cell, params, windows, u))
    return out


def _clipped_even_weights(q: int) -> np.ndarray:
    """Clipped lengths (in units of V) of the boxes for a_j = 2, 4, ..., 2q."""
    a = np.arange(2, 2 * q + 1, 2)
    w = np.where(a < q, 2.0, 0.0)
    w[a == q] = 1.0
    return w


def sample_eval_points(
    params: PacketParams,
    count: int,
    seed: int = 0,
    offset_mode: str = "uniform",
) -> list[EvalPoint]:
    """Points of Omega*, cells drawn proportionally to their (clipped) measure."""
    _require(params)
    bad = _lift_checks(params)
    if bad:
        raise ConstraintError("; ".join(bad))
    qs = q_range(params)
    phi = totient_sieve(qs[-1])
    n = params.n
    weights = np.array([phi[q] * float(q - 1) ** (n - 1) for q in qs])
    weights /= weights.sum()
    rng = np.random.Generator(np.random.Philox(seed))
    K = available_copies(params)
    out = []
    for _ in range(count):
        q = int(qs[rng.choice(len(qs), p=weights)])
        a = np.arange(1, q + 1)
        a1 = int(rng.choice(a[np.gcd(a, q) == 1]))
        w = _clipped_even_weights(q)
        ap = tuple(int(2 * (1 + rng.choice(q, p=w / w.sum()))) for _ in range(n - 1))
        cell = OmegaCell(q, a1, ap, params.U, params.V)
        u = _offsets(cell, rng if offset_mode == "uniform" else None)
        windows = [int(rng.integers(kk)) for kk in K]
        out.append(_lift(cell, params, windows, u))
    return out


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------


def write_cells_csv(cells: Sequence[OmegaCell], path: str | os.PathLike, n: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "a1"] + [f"a{j}" for j in range(2, n + 1)] + ["U", "V"])
        for c in cells:
            w.writerow([c.q, c.a1, *c.a_prime, repr(c.U), repr(c.V)])


def write_measure_csv(rows: Sequence[tuple[float, int, MeasureResult]], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Q", "n", "mode", "samples", "seed", "measure", "ci"])
        for Q, n, r in rows:
            w.writerow([repr(Q), n, r.mode, r.samples, "" if r.seed is None else r.seed, repr(r.value), repr(r.ci_halfwidth)])
