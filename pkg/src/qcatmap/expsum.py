"""Character exponential sums E(nu, chi) = sum_x e_N(nu x) chi(beta(x)).

The sum runs over the Cayley domain X = {x : D x^2 != 1 mod p}.  Two
evaluation routes are kept deliberately independent:

  * brute force - one term per x in X, character values through the
    discrete-log table (the oracle);
  * closed form (k >= 2) - the sum collapses to at most two square-root
    fibers mod p^(k//2), with an extra p-term Gauss factor for odd k.

Conventions: E is always real (terms pair conjugately under x -> -x);
a character is "good" for nu when 2 t_chi != -nu (mod p), in which case
|E| <= 2 p^(k/2) and an angle theta with E = 2 p^(k/2) cos(theta) exists.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadCharacterError,
    KTooSmallError,
    NonUnitError,
    WrongKError,
)
from .hecke import HeckeCharacter, HeckeGroup, build_group
from .modarith import PrimePower, gauss_quadratic, inv_mod, roots_table, sqrt_set
from .quantization import TorusAutomorphism

LIFT_CHECK_TOL = 1e-9
REALNESS_TOL = 1e-8

# brute force enumerates the whole domain; keep it at desk scale
BRUTE_FORCE_LIMIT = 300_000


@dataclass(frozen=True)
class ExpSumRecord:
    pp: PrimePower
    nu: int
    chi_index: int
    value: complex
    theta: float | None
    good: bool
    vanished: bool


def _check_nu(nu: int, pp: PrimePower) -> int:
    nu %= pp.N
    if nu % pp.p == 0:
        raise NonUnitError(f"nu = {nu} is not a unit mod {pp.p}")
    return nu


def _cayley_dlogs(group: HeckeGroup, xs) -> np.ndarray:
    """dlog(beta(x)) for each x (must be in the domain)."""
    ring = group.ring
    enc = np.fromiter(
        (group.encode(ring.cayley_transform(int(x))) for x in xs),
        dtype=np.int64,
    )
    return group.dlog_encoded(enc) if len(enc) else enc


def brute_force_table(group: HeckeGroup) -> np.ndarray:
    """dlog(beta(x)) over x = 0..N-1, -1 outside the domain (cached)."""
    tbl = getattr(group, "_cayley_table", None)
    if tbl is not None:
        return tbl
    N = group.pp.N
    if N > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute-force table for N = {N} is out of desk scale")
    ring = group.ring
    xs = [x for x in range(N) if ring.in_domain(x)]
    tbl = np.full(N, -1, dtype=np.int64)
    tbl[xs] = _cayley_dlogs(group, xs)
    group._cayley_table = tbl
    return tbl


def exp_sum_bruteforce(nu: int, chi: HeckeCharacter) -> complex:
    """Direct summation over the whole domain (the oracle route)."""
    group = chi.group
    pp = group.pp
    nu = _check_nu(nu, pp)
    tbl = brute_force_table(group)
    xs = np.nonzero(tbl >= 0)[0]
    chi_part = group.roots[chi.index * tbl[xs] % group.order]
    add_part = roots_table(pp.N)[nu * xs % pp.N]
    return complex((chi_part * add_part).sum())


def _gauss_factor(group: HeckeGroup, nu: int, t: int, x: int) -> complex:
    """Gauss sum G(x) for odd k, from the second-order expansion of the
    Cayley map along the fiber x + p^l y:

        f = 2 t D x / (D x^2 - 1)^2  (mod p)
        g = p^-l (nu - 2t/(D x^2 - 1))  (mod p)

    The quadratic coefficient comes from beta''/(2 beta) =
    2D(sqrt(D)x + 1)/(Dx^2-1)^2; it vanishes mod p exactly when t*x does,
    so good characters always see a nondegenerate Gauss sum.
    """
    pp = group.pp
    p = pp.p
    l = pp.k // 2
    pl1 = p ** (l + 1)
    D = group.ring.D
    denom = (D * x * x - 1) % pl1
    den_inv = pow(denom, -1, pl1)  # unit: D x^2 != 1 mod p
    f = 2 * t * D * x * den_inv * den_inv % p
    val = (nu - 2 * t * den_inv) % pl1
    if val % (pl1 // p) != 0:
        raise RuntimeError("square-root fiber violates the divisibility constraint")
    g = val // (pl1 // p) % p
    return gauss_quadratic(f, g, p)


def _closed_term(group: HeckeGroup, nu: int, chi: HeckeCharacter, t: int, x: int) -> complex:
    pp = group.pp
    term = roots_table(pp.N)[nu * x % pp.N] * chi.value(group.ring.cayley_transform(x))
    if pp.k % 2 == 1:
        term *= _gauss_factor(group, nu, t, x)
    return term


def exp_sum_closed(nu: int, chi: HeckeCharacter, check_lift: bool = True) -> complex:
    """Closed-form evaluation for k >= 2.

    E = p^l * sum over x in the square-root set of (2t+nu)/(nu D) mod p^l
    (within the domain) of e_N(nu x) chi(beta(x)) [* G(x) for odd k],
    with x lifted canonically from [0, p^l).  The summand is independent
    of the lift exactly on the square-root fiber; with check_lift the
    term is recomputed at x + p^l and compared.
    """
    group = chi.group
    pp = group.pp
    if pp.k < 2:
        raise KTooSmallError("closed form needs k >= 2; use exp_sum_bruteforce")
    nu = _check_nu(nu, pp)
    p, l = pp.p, pp.k // 2
    pl = p**l
    ppl = PrimePower(p, l)
    t = chi.t_parameter
    w = (2 * t + nu) * inv_mod(nu * group.ring.D, ppl) % pl
    total = 0.0 + 0.0j
    contributed = False
    for x in sqrt_set(w, p, l):
        if not group.ring.in_domain(x):
            continue
        term = _closed_term(group, nu, chi, t, x)
        if check_lift:
            other = _closed_term(group, nu, chi, t, x + pl)
            if abs(term - other) > LIFT_CHECK_TOL * (1.0 + abs(term)):
                raise RuntimeError(f"lift dependence at x = {x}: {term} vs {other}")
        total += term
        contributed = True
    value = pl * total
    if abs(value.imag) > REALNESS_TOL * (1.0 + abs(value)):
        raise RuntimeError(f"sum failed the realness check: {value}")
    return value if contributed else complex(0.0)


def theta_angle(record: ExpSumRecord) -> float:
    """theta in [0, pi] with E = 2 p^(k/2) cos(theta), good characters only."""
    if not record.good:
        raise BadCharacterError("theta is defined for good characters only")
    scale = 2.0 * record.pp.p ** (record.pp.k / 2.0)
    return math.acos(min(1.0, max(-1.0, record.value.real / scale)))


def _make_record(pp: PrimePower, nu: int, chi_index: int, value: complex, good: bool, vanished: bool) -> ExpSumRecord:
    rec = ExpSumRecord(pp, nu, chi_index, value, None, good, vanished)
    if good:
        return ExpSumRecord(pp, nu, chi_index, value, theta_angle(rec), good, vanished)
    return rec


def _sqrt_table_mod_p(p: int) -> np.ndarray:
    """tbl[v] = smallest square root of v mod p, or -1."""
    tbl = np.full(p, -1, dtype=np.int64)
    r = np.arange(p - 1, -1, -1, dtype=np.int64)
    tbl[(r * r) % p] = r
    return tbl


def _scan_k2_vectorized(group: HeckeGroup, nu: int) -> list[ExpSumRecord]:
    """All characters at once for k = 2 (one square-root fiber mod p)."""
    pp = group.pp
    p, N, order = pp.p, pp.N, group.order
    nu = _check_nu(nu, pp)
    ring = group.ring

    dom = [x for x in range(p) if ring.in_domain(x)]
    dlog1 = np.full(p, -1, dtype=np.int64)
    dlog1[dom] = _cayley_dlogs(group, dom)
    dlog2 = np.full(p, -1, dtype=np.int64)
    dlog2[dom] = _cayley_dlogs(group, [x + p for x in dom])

    j = np.arange(order, dtype=np.int64)
    t = j * group.t_unit % p
    tw = (2 * t + nu) % p
    good = tw != 0
    w = tw * pow(nu * ring.D % p, -1, p) % p
    root = _sqrt_table_mod_p(p)[w]

    roots_N = roots_table(N)
    roots_C = group.roots
    value = np.zeros(order, dtype=np.complex128)
    vanished = np.ones(order, dtype=bool)

    def fiber_terms(xs: np.ndarray, mask: np.ndarray, table: np.ndarray) -> np.ndarray:
        out = np.zeros(order, dtype=np.complex128)
        sel = np.nonzero(mask)[0]
        x = xs[sel]
        out[sel] = roots_N[nu * (x % N) % N] * roots_C[j[sel] * table[x % p] % order]
        return out

    # bad characters: w = 0, single root x = 0 (always in the domain)
    bad = ~good
    if bad.any():
        value[bad] = p * roots_C[j[bad] * int(dlog1[0]) % order]
        vanished[bad] = False

    live = good & (root >= 0)
    for r in (root, (p - root) % p):
        in_dom = live & (dlog1[np.clip(r, 0, p - 1)] >= 0)
        term = fiber_terms(r, in_dom, dlog1)
        lifted = fiber_terms(r + p, in_dom, dlog2)
        err = np.abs(term - lifted)
        if err.size and err.max() > LIFT_CHECK_TOL * 2:
            raise RuntimeError("lift dependence in the vectorized fiber sum")
        value += p * term
        vanished &= ~in_dom

    im_bad = np.abs(value.imag) > REALNESS_TOL * (1.0 + np.abs(value))
    if im_bad.any():
        raise RuntimeError("vectorized sums failed the realness check")

    return [
        _make_record(pp, nu, int(ji), complex(value[ji]), bool(good[ji]), bool(vanished[ji]))
        for ji in range(order)
    ]


def _scan_generic(group: HeckeGroup, nu: int, lo: int, hi: int) -> list[ExpSumRecord]:
    pp = group.pp
    out = []
    for ji in range(lo, hi):
        chi = group.character(ji)
        value = exp_sum_closed(nu, chi)
        good = chi.is_good(nu)
        vanished = value == 0
        out.append(_make_record(pp, nu, ji, value, good, vanished))
    return out


def _scan_chunk(args):
    flat, p, k, nu, lo, hi = args
    group = build_group(TorusAutomorphism.from_flat(flat), PrimePower(p, k))
    recs = _scan_generic(group, nu, lo, hi)
    return [(r.nu, r.chi_index, r.value, r.theta, r.good, r.vanished) for r in recs]


def scan_characters(group: HeckeGroup, nus, jobs: int = 1) -> list[ExpSumRecord]:
    """One closed-form record per (character, nu), ordered by (chi_index, nu).

    k = 2 runs a fully vectorized path; other k iterate characters and may
    partition the range across processes (results re-sorted, so the output
    is independent of the parallelism degree).
    """
    if group.pp.k < 2:
        raise KTooSmallError("scan needs k >= 2")
    records: list[ExpSumRecord] = []
    for nu in nus:
        if group.pp.k == 2:
            records.extend(_scan_k2_vectorized(group, int(nu)))
        elif jobs <= 1:
            records.extend(_scan_generic(group, _check_nu(int(nu), group.pp), 0, group.order))
        else:
            nu_ok = _check_nu(int(nu), group.pp)
            A = group.A
            flat = (A.a, A.b, A.c, A.d)
            step = -(-group.order // jobs)
            chunks = [
                (flat, group.pp.p, group.pp.k, nu_ok, lo, min(lo + step, group.order))
                for lo in range(0, group.order, step)
            ]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for part in pool.map(_scan_chunk, chunks):
                    records.extend(
                        ExpSumRecord(group.pp, n, ci, v, th, g, va)
                        for (n, ci, v, th, g, va) in part
                    )
    records.sort(key=lambda r: (r.chi_index, r.nu))
    return records


def find_large(group: HeckeGroup, nu: int, rel_tol: float = 1e-6) -> list[tuple[int, complex]]:
    """Characters with 2 t_chi = -nu (mod p^2) at k = 3; each has |E| = p^2.

    Returns (chi_index, E) pairs; the magnitude is asserted.
    """
    pp = group.pp
    if pp.k != 3:
        raise WrongKError("the exceptionally large sums live at k = 3")
    nu = _check_nu(nu, pp)
    p2 = pp.p**2
    # 2 t_chi = 2 j t_unit = -nu (mod p^2) has order/p^2 solutions j
    j0 = -nu * pow(2 * group.t_unit % p2, -1, p2) % p2
    out = []
    for j in range(j0, group.order, p2):
        value = exp_sum_closed(nu, group.character(j))
        if abs(abs(value) - p2) > rel_tol * p2:
            raise RuntimeError(f"|E| = {abs(value)} != p^2 = {p2} at chi_{j}")
        out.append((j, value))
    return out
