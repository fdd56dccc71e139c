"""The bump profile, the packet parameters, the function f_R and its norms."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

TWO_PI = 2.0 * math.pi

# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------


def composite_gauss(a: float, b: float, panels: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Gauss-Legendre on [a, b]."""
    x, w = leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    xs = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return xs, ws


def _bump(u: np.ndarray) -> np.ndarray:
    """exp(-1/(1-u^2)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros(u.shape)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


# ---------------------------------------------------------------------------
# Bump profile
# ---------------------------------------------------------------------------

# Beyond this |x| the value of phi is below 1e-25 and is returned as 0.
_PHI_CUTOFF = 4000.0


class BumpProfile:
    """phi = |psi_check|^2 with psi = C exp(-1/(1-(4 xi)^2)) on (-1/4, 1/4).

    C makes (1/2pi) int psi = 1, so phi(0) = 1 and phi_hat = (1/2pi) psi * psi(-.)
    is supported in [-1/2, 1/2].  Values are computed by composite Gauss-Legendre.
    """

    psi_halfwidth = 0.25

    def __init__(self, quadrature_nodes: int = 256, panels: int = 4, c0: float = 0.25):
        if quadrature_nodes < 64:
            raise ValueError("quadrature_nodes must be at least 64")
        self.quadrature_nodes = int(quadrature_nodes)
        self.panels = int(panels)
        self.c0 = float(c0)
        h = self.psi_halfwidth
        # psi nodes on [0, 1/4] (psi is even)
        self._xi, self._wxi = composite_gauss(0.0, h, self.panels, self.quadrature_nodes)
        raw = float(np.dot(self._wxi, _bump(self._xi / h))) * 2
        xi2, w2 = composite_gauss(0.0, h, 2 * self.panels, self.quadrature_nodes)
        raw2 = float(np.dot(w2, _bump(xi2 / h))) * 2
        if abs(raw - raw2) > 1e-8 * raw:
            raise ArithmeticError("psi normalization did not converge")
        self.psi_scale = TWO_PI / raw
        self._psi_nodes = self.psi(self._xi)
        # autocorrelation nodes on [-1, 1], mapped per evaluation point
        self._t, self._wt = composite_gauss(-1.0, 1.0, 4, 64)

    # -- psi and its transforms ---------------------------------------------
    def psi(self, xi: np.ndarray | float) -> np.ndarray:
        return self.psi_scale * _bump(np.asarray(xi, dtype=np.float64) / self.psi_halfwidth)

    def _psi_check_pair(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """psi_check(x) and its derivative, psi_check(x) = (1/pi) int_0^{1/4} psi cos(x xi)."""
        x = np.asarray(x, dtype=np.float64)
        flat = x.ravel()
        val = np.zeros(flat.shape)
        der = np.zeros(flat.shape)
        keep = np.abs(flat) <= _PHI_CUTOFF
        idx = np.nonzero(keep)[0]
        wp = self._wxi * self._psi_nodes / math.pi
        for start in range(0, idx.size, 2048):
            sl = idx[start : start + 2048]
            arg = np.outer(flat[sl], self._xi)
            val[sl] = np.cos(arg) @ wp
            der[sl] = -(np.sin(arg) @ (wp * self._xi))
        return val.reshape(x.shape), der.reshape(x.shape)

    def psi_check(self, x: np.ndarray | float) -> np.ndarray:
        return self._psi_check_pair(np.asarray(x))[0]

    def phi(self, x: np.ndarray | float) -> np.ndarray:
        return self.psi_check(x) ** 2

    def phi_prime(self, x: np.ndarray | float) -> np.ndarray:
        v, d = self._psi_check_pair(np.asarray(x))
        return 2 * v * d

    def phi_hat(self, xi: np.ndarray | float) -> np.ndarray:
        """(1/2pi) int psi(eta) psi(eta - xi) d eta; zero for |xi| >= 1/2."""
        xi = np.abs(np.asarray(xi, dtype=np.float64))
        flat = xi.ravel()
        out = np.zeros(flat.shape)
        h = self.psi_halfwidth
        idx = np.nonzero(flat < 2 * h)[0]
        for start in range(0, idx.size, 4096):
            sl = idx[start : start + 4096]
            lo = flat[sl] - h
            half = 0.5 * (h - lo)
            mid = 0.5 * (h + lo)
            eta = mid[:, None] + half[:, None] * self._t[None, :]
            vals = self.psi(eta) * self.psi(eta - flat[sl][:, None])
            out[sl] = (vals @ self._wt) * half / TWO_PI
        return out.reshape(xi.shape)

    def phi_via_hat(self, x: np.ndarray | float) -> np.ndarray:
        """phi(x) = (1/2pi) int phi_hat(xi) e^{i x xi} d xi; second route to phi."""
        xi, w = self.hat_nodes()[:2]
        hat = self.hat_nodes()[2]
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return (np.cos(np.outer(x, xi)) @ (w * hat)) / TWO_PI

    # -- quadrature tables and norms ----------------------------------------
    def hat_nodes(self, refine: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Composite GL nodes on [-1, 1] with weights and phi_hat values.

        Nodes where phi_hat vanishes exactly (|xi| >= 1/2) are dropped.
        """
        if refine == 1:
            return self._hat_table
        return self._make_hat_table(self.quadrature_nodes * refine)

    def _make_hat_table(self, nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xi, w = composite_gauss(-1.0, 1.0, self.panels, nodes)
        keep = np.abs(xi) < 2 * self.psi_halfwidth
        xi, w = xi[keep], w[keep]
        return xi, w, self.phi_hat(xi)

    @cached_property
    def _hat_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._make_hat_table(self.quadrature_nodes)

    @cached_property
    def phi_hat_l1(self) -> float:
        _, w, hat = self._hat_table
        return float(np.dot(w, np.abs(hat)))

    @cached_property
    def phi_l2(self) -> float:
        """||phi||_{L^2} by physical-space quadrature on [-1500, 1500]."""
        x, w = composite_gauss(0.0, 1500.0, 750, 24)
        return math.sqrt(2 * float(np.dot(w, self.phi(x) ** 2)))

    @cached_property
    def phi_inf(self) -> float:
        # phi = psi_check^2 <= ((1/2pi) int psi)^2 = phi(0)
        return float(self.phi(np.array([0.0]))[0])

    @cached_property
    def phi_prime_inf(self) -> float:
        x = np.linspace(0.0, 60.0, 12001)
        d = np.abs(self.phi_prime(x))
        k = int(np.argmax(d))
        lo, hi = x[max(k - 1, 0)], x[min(k + 1, x.size - 1)]
        fine = np.linspace(lo, hi, 2001)
        return float(max(d.max(), np.abs(self.phi_prime(fine)).max()))

    def delta0_cap_for(self, c0: float) -> float:
        """Largest delta with phi >= 1 - c0/2 on [-delta, delta] (bisection)."""
        level = 1.0 - c0 / 2.0
        grid = np.linspace(0.0, 4 * math.pi, 4001)
        vals = self.phi(grid)
        below = np.nonzero(vals < level)[0]
        if below.size == 0:
            return 4 * math.pi
        lo, hi = grid[below[0] - 1], grid[below[0]]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.phi(np.array([mid]))[0] >= level:
                lo = mid
            else:
                hi = mid
        return float(lo)

    @cached_property
    def delta0_cap(self) -> float:
        return self.delta0_cap_for(self.c0)

    def norms(self) -> dict[str, float]:
        return {
            "phi_l2": self.phi_l2,
            "phi_hat_l1": self.phi_hat_l1,
            "phi_inf": self.phi_inf,
            "phi_prime_inf": self.phi_prime_inf,
            "delta0_cap": self.delta0_cap,
        }


_BUMP_CACHE: dict[tuple[int, int, float], BumpProfile] = {}


def make_bump(quadrature_nodes: int = 256, panels: int = 4, c0: float = 0.25) -> BumpProfile:
    key = (quadrature_nodes, panels, c0)
    if key not in _BUMP_CACHE:
        _BUMP_CACHE[key] = BumpProfile(quadrature_nodes, panels, c0)
    return _BUMP_CACHE[key]


# ---------------------------------------------------------------------------
# Exponents
# ---------------------------------------------------------------------------


def _frac(v: float | int | str | Fraction) -> Fraction:
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**6)
    return Fraction(v)


@dataclass(frozen=True)
class ExponentSolution:
    n: int
    sigma: Fraction
    lam: Fraction
    kappa: Fraction
    s_star: Fraction

    def check(self) -> dict[str, bool]:
        n, s, lam, k = self.n, self.sigma, self.lam, self.kappa
        return {
            "lam_plus_kappa": lam + k == Fraction(n) / (n + 1) + s / (n + 1),
            "first_uv": 2 * lam + k >= 1 + s,
            "second_uv": lam + k * Fraction(n, n - 1) >= 1,
            "s_star": self.s_star == Fraction(n - 1 + 2 * s, 2 * (n + 1)),
        }


def solve_exponents(n: int, sigma: float | Fraction | str = Fraction(1, 2)) -> ExponentSolution:
    """(lambda, kappa) at the vertex of the two UV constraints with lambda+kappa minimal."""
    if n < 2:
        raise ValueError("n must be at least 2")
    s = _frac(sigma)
    if not 0 <= s <= Fraction(1, 2):
        raise ValueError(f"sigma={s} outside [0, 1/2]")
    lam = (1 + n * s) / (n + 1)
    kappa = (n - 1) * (1 - s) / (n + 1)
    s_star = (n - 1 + 2 * s) / (2 * (n + 1))
    return ExponentSolution(n, s, lam, kappa, s_star)


def exponent_grid_search(n: int, sigma: float, step: float = 1e-3) -> tuple[float, float, float]:
    """Brute-force (lambda, kappa) on [0,1]^2 maximizing the growth exponent subject to the UV constraints."""
    g = np.arange(0.0, 1.0 + step / 2, step)
    lam, kap = np.meshgrid(g, g, indexing="ij")
    tol = 1e-12
    ok = (2 * lam + kap >= 1 + sigma - tol) & (lam + kap * n / (n - 1) >= 1 - tol)
    obj = (n - 1) / 2 + sigma / 2 - (lam + kap) * (n - 1) / 2
    obj = np.where(ok, obj, -np.inf)
    i = np.unravel_index(int(np.argmax(obj)), obj.shape)
    return float(lam[i]), float(kap[i]), float(obj[i])


# ---------------------------------------------------------------------------
# Packet parameters
# ---------------------------------------------------------------------------


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    lhs: float
    rhs: float
    ok: bool


def snap_power(R: float, e: float | Fraction, rel: float = 1e-12) -> float:
    """R**e, snapped to the nearest integer when within rel of it."""
    v = float(R) ** float(e)
    r = round(v)
    if r != 0 and abs(v - r) <= rel * abs(v):
        return float(r)
    return v


CONSTANT_NAMES = ("c0", "delta0", "c1", "c2", "c3", "c4", "mu0", "Delta0", "eps0", "eps1", "C3prime", "C0")
_REL = 1e-12  # slack for the constraints that hold with equality at the chosen exponents


@dataclass(frozen=True)
class PacketParams:
    n: int
    R: float
    sigma: float
    lam: float
    kappa: float
    S1: float
    L: float
    Q: float
    rho: float  # R/L
    m_lo: int
    m_hi: int  # integers m_lo <= m < m_hi are exactly those in [R/L, 2R/L)
    c0: float
    delta0: float
    c1: float
    c2: float
    c3: float
    c4: float
    mu0: float
    Delta0: float
    eps0: float
    eps1: float
    C3prime: float
    C0: float
    phi_hat_l1: float
    checks: tuple[ConstraintCheck, ...] = field(default=(), compare=False)
    exact_sigma: Fraction = Fraction(1, 2)

    @property
    def count(self) -> int:
        return self.m_hi - self.m_lo

    @property
    def rho_exact(self) -> Fraction:
        return Fraction(self.R) / Fraction(self.L)

    @property
    def U(self) -> float:
        return math.pi * self.c3 / (4 * self.Q)

    @property
    def V(self) -> float:
        return math.pi * self.c4 / (self.mu0 * self.Q * self.Q ** (1.0 / (self.n - 1)))

    @property
    def violations(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]

    def to_dict(self) -> dict[str, Any]:
        d = {k: v for k, v in asdict(self).items() if k not in ("checks", "exact_sigma")}
        d["sigma_exact"] = str(self.exact_sigma)
        d["checks"] = [asdict(c) for c in self.checks]
        return d


def default_constants(n: int, bump: BumpProfile) -> dict[str, float]:
    c0 = 2.0**-n
    delta0 = min(bump.delta0_cap_for(c0), 1.0)
    c1 = min(delta0 / 4, c0 / (4 * bump.phi_hat_l1))
    c2 = 0.1
    c3 = min(c2, 1 / (4 * math.pi))
    mu0 = (4 * math.pi) ** -n
    C3prime = math.pi / mu0 * (1 + 1e-9)
    C3 = c3_leading(n, mu0, C3prime)
    c4 = 2 ** (-(n - 1) / 2) * c0 / (8 * C3)
    Delta0 = 1.0 / (n - 1)
    from .exponential_sums import DEFAULT_C0

    return {
        "c0": c0,
        "delta0": delta0,
        "c1": c1,
        "c2": c2,
        "c3": c3,
        "c4": c4,
        "mu0": mu0,
        "Delta0": Delta0,
        "eps0": 0.1,
        "eps1": 1 / (1 + Delta0),
        "C3prime": C3prime,
        "C0": DEFAULT_C0,
    }


def c3_leading(n: int, mu0: float, C3prime: float) -> float:
    """The c4-coefficient of the E(3) chain: (n-1) C3' (2 mu0)^{-(n-1)/2}."""
    return (n - 1) * C3prime * (2 * mu0) ** (-(n - 1) / 2)


def _checks(p: dict[str, Any]) -> list[ConstraintCheck]:
    n, R, S1, L, Q, rho = p["n"], p["R"], p["S1"], p["L"], p["Q"], p["rho"]
    out = []

    def add(name: str, lhs: float, rhs: float, strict: bool = False) -> None:
        ok = lhs < rhs if strict else lhs <= rhs * (1 + _REL)
        out.append(ConstraintCheck(name, float(lhs), float(rhs), bool(ok)))

    add("R >= 1", 1.0, R)
    add("0 <= sigma", 0.0, p["sigma"])
    add("sigma <= 1/2", p["sigma"], 0.5)
    add("1/2 < lambda", 0.5, p["lam"], strict=True)
    add("lambda < 1", p["lam"], 1.0, strict=True)
    add("L >= 4", 4.0, L)
    add("R/L >= Q^(1+Delta0)", Q ** (1 + p["Delta0"]), rho)
    add("Q >= (R/L)^eps1", rho ** p["eps1"], Q)
    add("1/Q <= L^2/(S1 R)", 1 / Q, L * L / (S1 * R))
    add("pi/(mu0 Q Q^(1/(n-1))) <= C3'/(R/L)", math.pi / (p["mu0"] * Q * Q ** (1 / (n - 1))), p["C3prime"] / rho)
    add("Q >= 1/(4 mu0)", 1 / (4 * p["mu0"]), Q)
    add("c3 <= min(c2, 1/(4 pi))", p["c3"], min(p["c2"], 1 / (4 * math.pi)))
    add("c3 <= 4 c2/pi", p["c3"], 4 * p["c2"] / math.pi)
    add("c4 < 1/2", p["c4"], 0.5, strict=True)
    add("c1 < delta0/2", p["c1"], p["delta0"] / 2, strict=True)
    add("c0 <= 2^-n", p["c0"], 2.0**-n)
    add("2 c2 <= delta0", 2 * p["c2"], p["delta0"])
    return out


def packet_params(
    n: int,
    R: float,
    solution: ExponentSolution | None = None,
    overrides: Mapping[str, float] | None = None,
    bump: BumpProfile | None = None,
    strict: bool = True,
) -> PacketParams:
    """Build S1, L, Q and the constants for dimension n and frequency R.

    With ``strict`` every failed constraint raises :class:`ConstraintError`
    naming the inequality; otherwise failures are recorded in ``checks``.
    """
    if R < 1:
        raise ConstraintError("R >= 1 required")
    solution = solution or solve_exponents(n)
    if solution.n != n:
        raise ValueError("solution computed for a different n")
    bump = bump or make_bump()
    consts = default_constants(n, bump)
    if overrides:
        unknown = set(overrides) - set(CONSTANT_NAMES)
        if unknown:
            raise KeyError(f"unknown constants: {sorted(unknown)}")
        consts.update({k: float(v) for k, v in overrides.items()})
        if "c4" not in overrides and ("c0" in overrides or "mu0" in overrides or "C3prime" in overrides):
            C3 = c3_leading(n, consts["mu0"], consts["C3prime"])
            consts["c4"] = 2 ** (-(n - 1) / 2) * consts["c0"] / (8 * C3)
    S1 = snap_power(R, solution.sigma)
    L = snap_power(R, solution.lam)
    Q = snap_power(R, solution.kappa)
    rho_exact = Fraction(float(R)) / Fraction(L)
    rho = float(rho_exact)
    m_lo = math.ceil(rho_exact)
    m_hi = math.ceil(2 * rho_exact)
    p: dict[str, Any] = dict(
        n=n,
        R=float(R),
        sigma=float(solution.sigma),
        lam=float(solution.lam),
        kappa=float(solution.kappa),
        S1=S1,
        L=L,
        Q=Q,
        rho=rho,
        m_lo=m_lo,
        m_hi=m_hi,
        phi_hat_l1=bump.phi_hat_l1,
        **consts,
    )
    checks = _checks(p)
    bad = [c for c in checks if not c.ok]
    if strict and bad:
        msg = "; ".join(f"{c.name} fails ({c.lhs:.6g} vs {c.rhs:.6g})" for c in bad)
        raise ConstraintError(f"n={n}, R={R:g}: {msg}")
    return PacketParams(checks=tuple(checks), exact_sigma=solution.sigma, **p)


def params_from_dict(d: Mapping[str, Any], bump: BumpProfile | None = None, strict: bool = True) -> PacketParams:
    """Rebuild and re-validate a logged parameter record."""
    sol = solve_exponents(int(d["n"]), Fraction(d.get("sigma_exact", d["sigma"])))
    overrides = {k: d[k] for k in CONSTANT_NAMES if k in d}
    p = packet_params(int(d["n"]), float(d["R"]), sol, overrides, bump, strict)
    for k in ("S1", "L", "Q", "m_lo", "m_hi"):
        if k in d and d[k] != getattr(p, k):
            raise ConstraintError(f"logged {k}={d[k]} disagrees with recomputed {getattr(p, k)}")
    return p


# ---------------------------------------------------------------------------
# Support, norms and f itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportInfo:
    box: tuple[tuple[float, float], ...]
    annulus_ok: bool


def f_hat_support(params: PacketParams) -> SupportInfo:
    return _support(params.n, params.R, params.S1)


def _support(n: int, R: float, S1: float) -> SupportInfo:
    box = ((R - S1, R + S1),) + ((R - 1, 2 * R + 1),) * (n - 1)
    C = 4 * math.sqrt(n)
    lo2 = sum(0.0 if a <= 0 <= b else min(a * a, b * b) for a, b in box)
    hi2 = sum(max(a * a, b * b) for a, b in box)
    ok = math.sqrt(lo2) >= R / C and math.sqrt(hi2) < C * R
    return SupportInfo(box, ok)


def annulus_threshold(n: int, sigma: float, lo: float = 1.0, hi: float = 1e6) -> float:
    """Smallest R (to 1e-9 relative) with the Fourier box inside the annulus, for S1 = R**sigma."""
    if not _support(n, hi, hi**sigma).annulus_ok:
        raise ValueError("no threshold below hi")
    if _support(n, lo, lo**sigma).annulus_ok:
        return lo
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _support(n, mid, mid**sigma).annulus_ok:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < 1e-12:
            break
    return hi


def l2_norm_closed(params: PacketParams, bump: BumpProfile) -> float:
    """S1^{-1/2} count^{(n-1)/2} ||phi||_2^n with the exact count of m in [R/L, 2R/L)."""
    if params.L < 4:
        raise ValueError("L >= 4 required for disjoint supports")
    n = params.n
    return params.S1**-0.5 * params.count ** ((n - 1) / 2) * bump.phi_l2**n


def l2_norm_numeric(params: PacketParams, bump: BumpProfile, nodes: int = 48) -> float:
    """Plancherel route: quadrature of |f_hat|^2 over a disjoint box per packet.

    Each box integral is taken in local coordinates (xi - L m, or (xi - R)/S1),
    where global coordinates of size ~R would lose the offset to rounding.
    """
    if params.L < 4:
        raise ValueError("L >= 4 required for disjoint supports")
    n, S1 = params.n, params.S1
    h = 2 * bump.psi_halfwidth  # phi_hat support radius
    t, w = composite_gauss(-h, h, 2, nodes)
    box = float(np.dot(w, bump.phi_hat(t) ** 2))
    # coordinate 1: f_hat_1(xi) = S1^{-1} phi_hat((xi - R)/S1) on [R - S1, R + S1]
    one = box / S1
    # coordinates j: boxes [Lm - h, Lm + h], one per integer m in [R/L, 2R/L)
    other = math.fsum([box] * params.count) if params.count <= 10**6 else box * params.count
    total = one * other ** (n - 1)
    return math.sqrt(total / TWO_PI**n)


@dataclass(frozen=True)
class HsFactors:
    lower_factor: float
    upper_factor: float


def hs_equivalence(R: float, C: float, s: float) -> HsFactors:
    """Two-sided conversion ||f||_{H^s} vs R^s ||f||_2 for f_hat in the annulus A(R, C)."""
    if C <= 1:
        raise ValueError("C must exceed 1")
    if R < 1 / C:
        raise ValueError("R >= 1/C required")
    return HsFactors(C**-s * R**s, 2 ** (s / 2) * C**s * R**s)


def _dirichlet_kernel(theta: float, m_lo: int, count: int) -> complex:
    """sum_{m_lo <= m < m_lo+count} e^{i theta m} in closed form."""
    th = math.remainder(theta, TWO_PI)
    half = th / 2
    if abs(math.sin(half)) < 1e-15:
        return complex(count) * complex(math.cos(th * m_lo), math.sin(th * m_lo))
    centre = th * (m_lo + (count - 1) / 2)
    centre = math.remainder(centre, TWO_PI)
    amp = math.sin(count * half) / math.sin(half)
    return amp * complex(math.cos(centre), math.sin(centre))


def evaluate_f(x: Sequence[float], params: PacketParams, bump: BumpProfile) -> complex:
    """f_R(x) with the m'-sum in closed form per coordinate."""
    x = [float(v) for v in x]
    if len(x) != params.n:
        raise ValueError(f"x must have length {params.n}")
    x1 = x[0]
    rx = math.remainder(params.R * x1, TWO_PI)
    val = complex(bump.phi(np.array([params.S1 * x1]))[0]) * complex(math.cos(rx), math.sin(rx))
    for xj in x[1:]:
        # L*m*x_j for integer m: reduce L*x_j first, then the kernel handles m
        th = math.remainder(params.L * xj, TWO_PI)
        val *= bump.phi(np.array([xj]))[0] * _dirichlet_kernel(th, params.m_lo, params.count)
    return val
