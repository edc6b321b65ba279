"""Hilbert space H_N = L^2(Z/NZ), elementary operators, and the propagator.

States are N-vectors with the 1/N-weighted inner product.  Elementary
operators act by a shift and a phase; the propagator for a matrix B with
det B = 1 (mod N) is assembled from the sum

    U(B) ~ sum_m Ttw(m) Ttw(-mB)  =  sum_m e_N(-w(m, mB)/2) Ttw(m(I-B)),

normalized by 1/(sqrt(#ker(B-I)) * N) so that the result is unitary; the
remaining global phase is a free convention.  Twisted operators Ttw(n)
only depend on n mod N, which is what makes the m-sum well defined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotNormalizedError,
    NotUnimodularError,
)
from .modarith import PrimePower, roots_table

# Dense operators get expensive past this dimension; callers that accept
# the cost (large eigenproblems) may pass their own cap.
DENSE_CAP_DEFAULT = 2048

Mat2 = tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True)
class TorusAutomorphism:
    """Hyperbolic integer matrix [[a, b], [c, d]] with det 1 and |tr| > 2."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a * self.d - self.b * self.c != 1:
            raise NotUnimodularError("matrix determinant must be 1")
        if abs(self.a + self.d) <= 2:
            raise ValueError("|trace| must exceed 2 (hyperbolicity)")

    @property
    def trace(self) -> int:
        return self.a + self.d

    @property
    def disc(self) -> int:
        """D = trace^2 - 4 > 0."""
        return self.trace**2 - 4

    def mat(self) -> Mat2:
        return ((self.a, self.b), (self.c, self.d))

    def mat_mod(self, N: int) -> Mat2:
        return ((self.a % N, self.b % N), (self.c % N, self.d % N))

    @classmethod
    def from_flat(cls, entries) -> "TorusAutomorphism":
        a, b, c, d = (int(v) for v in entries)
        return cls(a, b, c, d)


def row_action(n: tuple[int, int], M: Mat2) -> tuple[int, int]:
    """Row vector times matrix: n -> nM."""
    return (n[0] * M[0][0] + n[1] * M[1][0], n[0] * M[0][1] + n[1] * M[1][1])


def mat_mul(X: Mat2, Y: Mat2, N: int | None = None) -> Mat2:
    rows = tuple(
        tuple(sum(X[i][r] * Y[r][j] for r in range(2)) for j in range(2))
        for i in range(2)
    )
    if N is None:
        return rows
    return tuple(tuple(v % N for v in row) for row in rows)


def mat_det(M: Mat2) -> int:
    return M[0][0] * M[1][1] - M[0][1] * M[1][0]


def mat_sub(X: Mat2, Y: Mat2) -> Mat2:
    return tuple(tuple(X[i][j] - Y[i][j] for j in range(2)) for i in range(2))


IDENTITY2: Mat2 = ((1, 0), (0, 1))


def smith_diagonal(M: Mat2) -> tuple[int, int]:
    """Smith normal form diagonal (d1, d2) of an integer 2x2 matrix, d1 | d2."""
    entries = [M[0][0], M[0][1], M[1][0], M[1][1]]
    d1 = 0
    for v in entries:
        d1 = math.gcd(d1, v)
    if d1 == 0:
        return (0, 0)
    det = abs(mat_det(M))
    return (d1, det // d1)


def kernel_count(M: Mat2, N: int) -> int:
    """#{n in (Z/NZ)^2 : nM = 0 (mod N)}.

    Exhaustive count up to N = 1000, Smith-normal-form count above;
    the two agree wherever both run.
    """
    if N <= 1000:
        n1 = np.arange(N, dtype=np.int64)[:, None]
        n2 = np.arange(N, dtype=np.int64)[None, :]
        c1 = (n1 * (M[0][0] % N) + n2 * (M[1][0] % N)) % N
        c2 = (n1 * (M[0][1] % N) + n2 * (M[1][1] % N)) % N
        return int(np.count_nonzero((c1 == 0) & (c2 == 0)))
    d1, d2 = smith_diagonal(M)
    return math.gcd(d1, N) * math.gcd(d2, N)


@dataclass
class StateVector:
    """Complex vector in H_N with inner product (1/N) sum phi conj(psi)."""

    pp: PrimePower
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.pp.N,):
            raise DimensionMismatchError(
                f"expected {self.pp.N} amplitudes, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return math.sqrt(float(np.vdot(self.amplitudes, self.amplitudes).real) / self.pp.N)

    def normalized(self) -> "StateVector":
        return StateVector(self.pp, self.amplitudes / self.norm())

    @classmethod
    def delta(cls, pp: PrimePower, y: int) -> "StateVector":
        amps = np.zeros(pp.N, dtype=np.complex128)
        amps[y % pp.N] = 1.0
        return cls(pp, amps)


def inner_product(phi: StateVector, psi: StateVector) -> complex:
    """(1/N) sum_y phi(y) conj(psi(y))."""
    if phi.pp != psi.pp:
        raise DimensionMismatchError("states live in different spaces")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes) / phi.pp.N)


@dataclass(frozen=True)
class FourierObservable:
    """Finite Fourier series: map n = (n1, n2) in Z^2 -> coefficient."""

    coeffs: dict[tuple[int, int], complex]

    REAL_TOL = 1e-12

    @property
    def is_real(self) -> bool:
        for n, c in self.coeffs.items():
            m = (-n[0], -n[1])
            if abs(complex(c) - complex(self.coeffs.get(m, 0)).conjugate()) > self.REAL_TOL:
                return False
        return True

    @property
    def mean(self) -> complex:
        """Coefficient of the constant mode (the phase-space average)."""
        return complex(self.coeffs.get((0, 0), 0.0))

    @classmethod
    def harmonic_pair(cls, n: tuple[int, int], amplitude: complex = 0.5) -> "FourierObservable":
        """Real observable with modes +-n: amplitude*e(n.x) + conj(...)e(-n.x)."""
        n = (int(n[0]), int(n[1]))
        return cls({n: complex(amplitude), (-n[0], -n[1]): complex(amplitude).conjugate()})


def load_observable(path: str, require_real: bool = False) -> FourierObservable:
    """Read a JSON array of {n1, n2, re, im} records."""
    with open(path) as fh:
        records = json.load(fh)
    coeffs: dict[tuple[int, int], complex] = {}
    for rec in records:
        n = (int(rec["n1"]), int(rec["n2"]))
        if n in coeffs:
            raise ValueError(f"duplicate mode {n} in {path}")
        coeffs[n] = complex(float(rec["re"]), float(rec["im"]))
    obs = FourierObservable(coeffs)
    if require_real and not obs.is_real:
        raise ValueError(f"{path} is not a real-valued observable")
    return obs


@dataclass
class DenseOperator:
    """Dense N x N matrix acting on StateVector amplitudes."""

    pp: PrimePower
    entries: np.ndarray

    def apply(self, psi: StateVector) -> StateVector:
        if psi.pp != self.pp:
            raise DimensionMismatchError("operator and state dimensions differ")
        return StateVector(self.pp, self.entries @ psi.amplitudes)

    def is_unitary(self, tol: float = 1e-8) -> bool:
        N = self.pp.N
        err = self.entries @ self.entries.conj().T - np.eye(N)
        return float(np.abs(err).max()) < tol


def apply_elementary(n: tuple[int, int], psi: StateVector) -> StateVector:
    """(T(n) psi)(y) = e_{2N}(n1 n2) e_N(n2 y) psi(y + n1)."""
    N = psi.pp.N
    n1, n2 = int(n[0]), int(n[1])
    phase0 = roots_table(2 * N)[(n1 * n2) % (2 * N)]
    phases = phase0 * roots_table(N)[(n2 * np.arange(N)) % N]
    return StateVector(psi.pp, phases * np.roll(psi.amplitudes, -n1 % N))


def apply_twisted(n: tuple[int, int], psi: StateVector) -> StateVector:
    """Twisted operator Ttw(n) = (-1)^(n1 n2) T(n); periodic in n mod N."""
    out = apply_elementary(n, psi)
    if (n[0] * n[1]) % 2:
        out.amplitudes = -out.amplitudes
    return out


def elementary_matrix(n: tuple[int, int], pp: PrimePower, twisted: bool = False) -> DenseOperator:
    """Dense matrix of T(n) (or Ttw(n)): entry [y, y+n1] = phase(n, y)."""
    N = pp.N
    n1, n2 = int(n[0]), int(n[1])
    y = np.arange(N)
    phase0 = roots_table(2 * N)[(n1 * n2) % (2 * N)]
    if twisted and (n1 * n2) % 2:
        phase0 = -phase0
    vals = phase0 * roots_table(N)[(n2 * y) % N]
    entries = np.zeros((N, N), dtype=np.complex128)
    entries[y, (y + n1) % N] = vals
    return DenseOperator(pp, entries)


def op_of_observable(f: FourierObservable, pp: PrimePower) -> DenseOperator:
    """Quantization Op_N(f) = sum_n fhat(n) T(n) as a dense matrix."""
    N = pp.N
    y = np.arange(N)
    entries = np.zeros((N, N), dtype=np.complex128)
    two_n = roots_table(2 * N)
    one_n = roots_table(N)
    for (n1, n2), c in sorted(f.coeffs.items()):
        vals = complex(c) * two_n[(n1 * n2) % (2 * N)] * one_n[(n2 * y) % N]
        entries[y, (y + n1) % N] += vals
    return DenseOperator(pp, entries)


def matrix_element(n: tuple[int, int], psi: StateVector) -> complex:
    """<T(n) psi, psi> for a normalized state."""
    if abs(psi.norm() - 1.0) > 1e-8:
        raise NotNormalizedError("matrix_element requires a unit vector")
    return inner_product(apply_elementary(n, psi), psi)


def _reduce_mat(B, N: int) -> Mat2:
    if isinstance(B, TorusAutomorphism):
        return B.mat_mod(N)
    return tuple(tuple(int(v) % N for v in row) for row in B)


def _twist_coefficients(B: Mat2, pp: PrimePower) -> np.ndarray:
    """c[n1, n2] = sum over m with m(I-B) = n of e_N(-w(m, mB)/2).

    w(m, mB) = B12 m1^2 + (B22 - B11) m1 m2 - B21 m2^2; everything is
    reduced mod N before products so int64 never overflows.
    """
    N = pp.N
    inv2 = pow(2, -1, N)
    (b11, b12), (b21, b22) = B
    w11, w12 = (1 - b11) % N, (-b12) % N
    w21, w22 = (-b21) % N, (1 - b22) % N

    roots = roots_table(N)
    c_re = np.zeros(N * N)
    c_im = np.zeros(N * N)
    m2 = np.arange(N, dtype=np.int64)[None, :]
    chunk = max(1, min(N, (1 << 24) // N))
    for start in range(0, N, chunk):
        m1 = np.arange(start, min(start + chunk, N), dtype=np.int64)[:, None]
        n1 = (m1 * w11 + m2 * w21) % N
        n2 = (m1 * w12 + m2 * w22) % N
        idx = (n1 * N + n2).ravel()
        del n1, n2
        omega = (b12 * ((m1 * m1) % N) + (b22 - b11) % N * ((m1 * m2) % N) - b21 * ((m2 * m2) % N)) % N
        phase = (-omega * inv2) % N
        del omega
        vals = roots[phase.ravel()]
        del phase
        c_re += np.bincount(idx, weights=vals.real, minlength=N * N)
        c_im += np.bincount(idx, weights=vals.imag, minlength=N * N)
        del idx, vals
    return (c_re + 1j * c_im).reshape(N, N)


def propagator(B, pp: PrimePower) -> DenseOperator:
    """Quantum propagator for B with det B = 1 (mod N), up to a global phase.

    Assembled by grouping the m-sum by n = m(I-B) and applying one inverse
    DFT per value of n1, which brings the cost to O(N^2 log N).
    """
    N = pp.N
    B = _reduce_mat(B, N)
    if mat_det(B) % N != 1:
        raise NotUnimodularError(f"det = {mat_det(B) % N} != 1 mod {N}")
    ker = kernel_count(mat_sub(B, IDENTITY2), N)
    coeff = _twist_coefficients(B, pp)
    norm = 1.0 / (math.sqrt(ker) * N)

    # entry [y, y+n1] = sum_{n2} c[n1,n2] e_N(n2 (y + n1/2))
    inv2 = pow(2, -1, N)
    y = np.arange(N)
    entries = np.zeros((N, N), dtype=np.complex128)
    rows = np.fft.ifft(coeff, axis=1) * N
    del coeff
    for n1 in range(N):
        shift = (n1 * inv2) % N
        entries[y, (y + n1) % N] = norm * rows[n1][(y + shift) % N]
    return DenseOperator(pp, entries)


def propagator_trace_magnitude_sq(B, pp: PrimePower) -> float:
    """|Tr U(B)|^2 from the dense construction (phase-free quantity)."""
    return abs(np.trace(propagator(B, pp).entries)) ** 2


def fixed_point_count(B, pp: PrimePower) -> int:
    """#ker(B - I) over (Z/NZ)^2."""
    N = pp.N
    return kernel_count(mat_sub(_reduce_mat(B, N), IDENTITY2), N)
