"""Simultaneous Dirichlet approximation, convergents and small arithmetic functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DirichletResult:
    q: int
    a: tuple[int, ...]
    errors: tuple[float, ...]


def dirichlet_exponent_floor(Q: int, m: int) -> int:
    """Largest integer P with P**m <= Q."""
    P = int(round(Q ** (1.0 / m)))
    while P**m > Q:
        P -= 1
    while (P + 1) ** m <= Q:
        P += 1
    return P


def _validate(y: np.ndarray, Q: int) -> None:
    if y.shape[-1] == 0:
        raise ValueError("y must be nonempty")
    if Q < 1:
        raise ValueError("Q must be positive")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("every y_j must lie in [0, 1]")


def dirichlet_batch(Y: np.ndarray, Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive search over q <= Q for each row of Y.

    Returns (q, a) where q minimizes max_j ||q y_j|| (smallest q on ties) and
    a_j = round(q y_j).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    _validate(Y, Q)
    best_q = np.ones(Y.shape[0], dtype=np.int64)
    best = np.full(Y.shape[0], np.inf)
    for q in range(1, Q + 1):
        qy = q * Y
        dist = np.abs(qy - np.rint(qy)).max(axis=1)
        better = dist < best
        best[better] = dist[better]
        best_q[better] = q
    a = np.rint(best_q[:, None] * Y).astype(np.int64)
    return best_q, a


def dirichlet_simultaneous(y: Sequence[float], Q: int) -> DirichletResult:
    """Best common denominator q <= Q for the vector y (exhaustive search)."""
    yv = np.asarray(y, dtype=np.float64)
    if yv.ndim != 1:
        raise ValueError("y must be a vector")
    q_arr, a_arr = dirichlet_batch(yv[None, :], Q)
    q = int(q_arr[0])
    a = tuple(int(v) for v in a_arr[0])
    errors = tuple(abs(float(yj) - aj / q) for yj, aj in zip(yv, a))
    return DirichletResult(q, a, errors)


def dirichlet_certified(y: Sequence[float], result: DirichletResult, Q: int) -> bool:
    """Exact check of |y_j - a_j/q| <= 1/(q P) with P = floor(Q**(1/m))."""
    P = dirichlet_exponent_floor(Q, len(y))
    if not 1 <= result.q <= Q:
        return False
    return all(abs(Fraction(float(yj)) * result.q - aj) * P <= 1 for yj, aj in zip(y, result.a))


def dirichlet_pigeonhole(y: Sequence[float], P: int) -> DirichletResult:
    """The pigeonhole construction: some 1 <= q <= P**m has ||q y_j|| <= 1/P for all j."""
    yf = [Fraction(float(v)) for v in y]
    m = len(yf)
    if m == 0 or P < 1:
        raise ValueError("need nonempty y and P >= 1")
    seen: dict[tuple[int, ...], int] = {}
    for k in range(P**m + 1):
        frac = [k * v - math.floor(k * v) for v in yf]
        box = tuple(min(int(f * P), P - 1) for f in frac)
        if box in seen:
            k0 = seen[box]
            q = k - k0
            a = tuple(math.floor(k * v) - math.floor(k0 * v) for v in yf)
            # the fractional parts differ by < 1/P, so |q y_j - a_j| < 1/P
            errors = tuple(float(abs(v - Fraction(ai, q))) for v, ai in zip(yf, a))
            return DirichletResult(q, a, errors)
        seen[box] = k
    raise AssertionError("pigeonhole failed")  # unreachable


def continued_fraction(theta: float | Fraction, max_terms: int = 64) -> list[int]:
    """Partial quotients of theta (exact, from its binary value)."""
    x = Fraction(theta)
    out = []
    for _ in range(max_terms):
        a = math.floor(x)
        out.append(a)
        x -= a
        if x == 0:
            break
        x = 1 / x
    return out


def convergents(theta: float | Fraction, max_terms: int = 64) -> list[Fraction]:
    p0, q0, p1, q1 = 1, 0, 0, 1
    out = []
    for a in continued_fraction(theta, max_terms):
        p0, p1 = a * p0 + p1, p0
        q0, q1 = a * q0 + q1, q0
        out.append(Fraction(p0, q0))
    return out


def best_rational(theta: float | Fraction, q_max: int) -> Fraction:
    """The last convergent of theta with denominator <= q_max."""
    if q_max < 1:
        raise ValueError("q_max must be positive")
    best = Fraction(math.floor(Fraction(theta)))
    for c in convergents(theta):
        if c.denominator > q_max:
            break
        best = c
    return best


def _factor(q: int) -> dict[int, int]:
    if q < 1:
        raise ValueError("q must be positive")
    out: dict[int, int] = {}
    d = 2
    while d * d <= q:
        while q % d == 0:
            out[d] = out.get(d, 0) + 1
            q //= d
        d += 1 if d == 2 else 2
    if q > 1:
        out[q] = out.get(q, 0) + 1
    return out


def totient(q: int) -> int:
    result = q
    for p in _factor(q):
        result -= result // p
    return result


def omega_distinct(q: int) -> int:
    return len(_factor(q))


def totient_sieve(n: int) -> np.ndarray:
    """phi(k) for k = 0..n (phi(0) = 0)."""
    phi = np.arange(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if phi[p] == p:  # p is prime
            phi[p::p] -= phi[p::p] // p
    return phi


def omega_sieve(n: int) -> np.ndarray:
    """omega(k) for k = 0..n."""
    om = np.zeros(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if om[p] == 0:
            om[p::p] += 1
    return om
