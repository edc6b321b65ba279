"""Exact arithmetic over Z/p^k for odd primes p.

Inverses, Legendre symbols, square-root sets with Hensel lifting,
roots of unity, and quadratic Gauss sums.  Everything here works on
plain Python integers; nothing modular ever passes through floats.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EvenPrimeError, NonUnitError

# Above this modulus sqrt_set switches from exhaustive search to
# Tonelli-Shanks + Hensel lifting.
EXHAUSTIVE_SQRT_LIMIT = 10_000

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin (valid far beyond desk scale)."""
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimePower:
    """Modulus N = p^k for an odd prime p."""

    p: int
    k: int

    def __post_init__(self):
        if self.p == 2:
            raise EvenPrimeError("p = 2 is not supported")
        if self.p < 3 or not is_prime(self.p):
            raise ValueError(f"p = {self.p} is not an odd prime")
        if self.k < 1:
            raise ValueError(f"exponent k = {self.k} must be >= 1")

    @functools.cached_property
    def N(self) -> int:
        return self.p**self.k

    def __str__(self):
        return f"{self.p}^{self.k}"


def valuation(n: int, p: int) -> int:
    """Largest a with p^a | n (n != 0)."""
    if n == 0:
        raise ValueError("valuation of 0 is infinite")
    a = 0
    while n % p == 0:
        n //= p
        a += 1
    return a


def inv_mod(a: int, pp: PrimePower) -> int:
    """Inverse of a modulo p^k; raises NonUnitError when p | a."""
    a %= pp.N
    if a % pp.p == 0:
        raise NonUnitError(f"{a} is not a unit mod {pp}")
    return pow(a, -1, pp.N)


def legendre(a: int, p: int) -> int:
    """Legendre symbol (a|p) in {-1, 0, +1} by Euler's criterion."""
    if p == 2:
        raise EvenPrimeError("Legendre symbol needs an odd prime")
    a %= p
    if a == 0:
        return 0
    e = pow(a, (p - 1) // 2, p)
    return 1 if e == 1 else -1


def tonelli_shanks(a: int, p: int) -> int:
    """One square root of a quadratic residue a modulo an odd prime p."""
    a %= p
    if a == 0:
        return 0
    if legendre(a, p) != 1:
        raise ValueError(f"{a} is not a square mod {p}")
    if p % 4 == 3:
        return pow(a, (p + 1) // 4, p)
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while legendre(z, p) != -1:
        z += 1
    c = pow(z, q, p)
    r = pow(a, (q + 1) // 2, p)
    t = pow(a, q, p)
    m = s
    while t != 1:
        i, x = 0, t
        while x != 1:
            x = x * x % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        r = r * b % p
        c = b * b % p
        t = t * c % p
        m = i
    return r


def hensel_sqrt(a: int, p: int, m: int) -> int:
    """Lift the mod-p square root of a unit square a to modulus p^m."""
    root = tonelli_shanks(a % p, p)
    modulus = p
    while modulus < p**m:
        modulus = min(modulus * modulus, p**m)
        # Newton step x -> x - (x^2 - a) / (2x), exact in Z/modulus
        root = (root - (root * root - a) * pow(2 * root, -1, modulus)) % modulus
    return root % p**m


def sqrt_set(nu: int, p: int, l: int, method: str = "auto") -> tuple[int, ...]:
    """All x mod p^l with x^2 = nu (mod p^l), as a sorted tuple.

    For nu = p^a * u with u a unit, solutions exist iff a is even and u is
    a square mod p; there are then 2*p^(a/2) of them.  For nu = 0 the set
    is the multiples of p^ceil(l/2).  Small moduli are searched
    exhaustively; larger ones go through Tonelli-Shanks and Hensel
    lifting.  Both paths agree on their overlap.
    """
    if method not in ("auto", "exhaustive", "lifted"):
        raise ValueError(f"unknown method {method!r}")
    N = p**l
    nu %= N
    if method == "exhaustive" or (method == "auto" and N <= EXHAUSTIVE_SQRT_LIMIT):
        x = np.arange(N, dtype=np.int64)
        return tuple(int(v) for v in np.nonzero((x * x) % N == nu)[0])
    if nu == 0:
        step = p ** ((l + 1) // 2)
        return tuple(range(0, N, step))
    a = valuation(nu, p)
    u = nu // p**a
    if a % 2 == 1 or legendre(u, p) != 1:
        return ()
    y0 = hensel_sqrt(u, p, l - a)
    half = p ** (a // 2)
    mod_y = p ** (l - a)
    roots = set()
    for y in (y0, mod_y - y0):
        for j in range(half):
            roots.add(half * (y + mod_y * j) % N)
    return tuple(sorted(roots))


@functools.lru_cache(maxsize=128)
def roots_table(N: int) -> np.ndarray:
    """Table of e(x/N) = exp(2*pi*i*x/N) for x = 0..N-1 (read-only)."""
    table = np.exp(2j * np.pi * np.arange(N) / N)
    table.flags.writeable = False
    return table


def root_of_unity(x: int, N: int) -> complex:
    """e(x/N) with the exponent reduced mod N before any float appears."""
    return complex(np.exp(2j * np.pi * (x % N) / N))


def gauss_quadratic(f: int, g: int, p: int) -> complex:
    """Quadratic Gauss sum sum_y e_p(f*y^2 + g*y) by direct summation.

    |result| is p, 0 or sqrt(p) according to whether (f, g) is (0,0),
    (0, nonzero) or f is a unit.
    """
    if p == 2:
        raise EvenPrimeError("Gauss sums are evaluated for odd p only")
    y = np.arange(p, dtype=np.int64)
    expo = (f % p * ((y * y) % p) + g % p * y) % p
    return complex(roots_table(p)[expo].sum())


def binomial(n: int, r: int) -> int:
    return math.comb(n, r)
