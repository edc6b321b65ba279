import math

import numpy as np
import pytest

from qcatmap.errors import (
    DimensionMismatchError,
    NotNormalizedError,
    NotUnimodularError,
)
from qcatmap.modarith import PrimePower
from qcatmap.quantization import (
    FourierObservable,
    StateVector,
    TorusAutomorphism,
    apply_elementary,
    apply_twisted,
    elementary_matrix,
    fixed_point_count,
    inner_product,
    kernel_count,
    mat_mul,
    matrix_element,
    op_of_observable,
    propagator,
    row_action,
    smith_diagonal,
)

PP5 = PrimePower(5, 1)
PP9 = PrimePower(3, 2)


def random_state(pp, seed=0):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=pp.N) + 1j * rng.normal(size=pp.N)
    return StateVector(pp, amps)


def test_automorphism_validation():
    A = TorusAutomorphism(2, 1, 1, 1)
    assert A.trace == 3 and A.disc == 5
    with pytest.raises(NotUnimodularError):
        TorusAutomorphism(2, 1, 1, 2)
    with pytest.raises(ValueError):
        TorusAutomorphism(0, 1, -1, 0)  # rotation: trace 0


def test_inner_product_examples():
    ones = StateVector(PP5, np.ones(5))
    assert abs(inner_product(ones, ones) - 1.0) < 1e-15
    d0, d1 = StateVector.delta(PP5, 0), StateVector.delta(PP5, 1)
    assert inner_product(d0, d1) == 0
    phi, psi = random_state(PP9, 1), random_state(PP9, 2)
    assert abs(inner_product(phi, psi) - inner_product(psi, phi).conjugate()) < 1e-12
    with pytest.raises(DimensionMismatchError):
        inner_product(d0, random_state(PP9))


def test_apply_elementary_examples():
    psi = random_state(PrimePower(3, 1), 3)
    out = apply_elementary((0, 0), psi)
    assert np.allclose(out.amplitudes, psi.amplitudes)
    # translation: delta_0 -> delta_2 for n = (1, 0), N = 3
    d0 = StateVector.delta(PrimePower(3, 1), 0)
    out = apply_elementary((1, 0), d0)
    assert np.argmax(np.abs(out.amplitudes)) == 2
    # modulation: n = (0, 1) multiplies by e_3(y)
    out = apply_elementary((0, 1), psi)
    phases = np.exp(2j * np.pi * np.arange(3) / 3)
    assert np.allclose(out.amplitudes, phases * psi.amplitudes)


def test_apply_twisted_signs_and_norm():
    psi = random_state(PP9, 4)
    plus = apply_twisted((2, 1), psi)
    untw = apply_elementary((2, 1), psi)
    assert np.allclose(plus.amplitudes, untw.amplitudes)
    minus = apply_twisted((1, 1), psi)
    untw = apply_elementary((1, 1), psi)
    assert np.allclose(minus.amplitudes, -untw.amplitudes)
    for n in [(1, 2), (3, 5), (0, 4)]:
        assert abs(apply_twisted(n, psi).norm() - psi.norm()) < 1e-12


def test_twisted_periodic_mod_N():
    psi = random_state(PP9, 5)
    for n in [(1, 2), (4, 7)]:
        a = apply_twisted(n, psi).amplitudes
        b = apply_twisted((n[0] + PP9.N, n[1]), psi).amplitudes
        c = apply_twisted((n[0], n[1] + 2 * PP9.N), psi).amplitudes
        assert np.allclose(a, b) and np.allclose(a, c)


def test_composition_law_scalar_is_root_of_unity():
    pp = PrimePower(5, 1)
    for m, n in [((1, 0), (0, 1)), ((2, 3), (1, 1)), ((1, 4), (3, 2))]:
        Tm = elementary_matrix(m, pp, twisted=True).entries
        Tn = elementary_matrix(n, pp, twisted=True).entries
        Tmn = elementary_matrix((m[0] + n[0], m[1] + n[1]), pp, twisted=True).entries
        prod = Tm @ Tn
        mask = np.abs(Tmn) > 0.5
        scalar = prod[mask][0] / Tmn[mask][0]
        assert np.allclose(prod, scalar * Tmn)
        assert abs(abs(scalar) - 1) < 1e-12
        assert abs(scalar ** (2 * pp.N) - 1) < 1e-10


def test_elementary_trace():
    pp = PP9
    for n in [(1, 0), (0, 2), (4, 7), (3, 3)]:
        tr = np.trace(elementary_matrix(n, pp, twisted=True).entries)
        if n[0] % pp.N == 0 and n[1] % pp.N == 0:
            assert abs(tr - pp.N) < 1e-12
        else:
            assert abs(tr) < 1e-12
    # untwisted trace at n = 0 mod N is +-N
    tr = np.trace(elementary_matrix((pp.N, pp.N), pp, twisted=False).entries)
    assert abs(abs(tr) - pp.N) < 1e-12


def test_op_of_observable():
    f1 = FourierObservable({(0, 0): 1.0})
    assert np.allclose(op_of_observable(f1, PP5).entries, np.eye(5))
    # real observable -> Hermitian matrix
    f = FourierObservable({(1, 2): 0.5 + 0.25j, (-1, -2): 0.5 - 0.25j, (0, 0): 2.0})
    assert f.is_real
    H = op_of_observable(f, PP9).entries
    assert np.abs(H - H.conj().T).max() < 1e-9
    # a +-n pair assembles to T(n) + T(-n)
    g = FourierObservable({(1, 2): 1.0, (-1, -2): 1.0})
    direct = elementary_matrix((1, 2), PP9).entries + elementary_matrix((-1, -2), PP9).entries
    assert np.abs(op_of_observable(g, PP9).entries - direct).max() < 1e-12


def test_matrix_element_basics():
    psi = random_state(PP9, 6).normalized()
    assert abs(matrix_element((0, 0), psi) - 1.0) < 1e-10
    for n in [(1, 2), (2, 1), (5, 3)]:
        lhs = matrix_element(n, psi)
        rhs = matrix_element((-n[0], -n[1]), psi).conjugate()
        assert abs(lhs - rhs) < 1e-12
        assert abs(lhs) <= 1 + 1e-10
    with pytest.raises(NotNormalizedError):
        matrix_element((1, 0), random_state(PP9, 7))


def test_kernel_count_smith_vs_exhaustive():
    rng = np.random.default_rng(8)
    for N in (9, 27, 121, 125):
        for _ in range(25):
            M = tuple(tuple(int(v) for v in row) for row in rng.integers(-30, 30, size=(2, 2)))
            exhaustive = kernel_count(M, N)
            d1, d2 = smith_diagonal(M)
            snf = math.gcd(d1, N) * math.gcd(d2, N)
            assert exhaustive == snf


def test_kernel_count_above_switch():
    # identity-minus-scaled matrices with known kernels at N > 1000
    N = 2197
    assert kernel_count(((0, 0), (0, 0)), N) == N * N
    assert kernel_count(((13, 0), (0, 13)), N) == 13 * 13
    assert kernel_count(((1, 0), (0, 0)), N) == N


def test_propagator_identity_and_unimodularity():
    U = propagator(((1, 0), (0, 1)), PP9)
    assert np.abs(U.entries - np.eye(9)).max() < 1e-12
    with pytest.raises(NotUnimodularError):
        propagator(((2, 0), (0, 1)), PP9)


@pytest.mark.parametrize("p,k", [(5, 1), (3, 2), (7, 1), (3, 3), (11, 1)])
def test_propagator_unitary_and_egorov(cat_map, p, k):
    pp = PrimePower(p, k)
    N = pp.N
    U = propagator(cat_map, pp)
    assert U.is_unitary(1e-8)
    Amod = cat_map.mat_mod(N)
    for n in [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (3, 2)]:
        lhs = U.entries.conj().T @ elementary_matrix(n, pp, twisted=True).entries @ U.entries
        rhs = elementary_matrix(row_action(n, Amod), pp, twisted=True).entries
        assert np.abs(lhs - rhs).max() < 1e-8


def test_propagator_unitarity_on_random_sl2():
    pp = PrimePower(7, 1)
    rng = np.random.default_rng(9)
    psi = random_state(pp, 10)
    cases = 0
    while cases < 5:
        a, b = int(rng.integers(0, 7)), int(rng.integers(0, 7))
        # complete (a, b) to det 1 mod 7 when possible
        if a == 0 and b == 0:
            continue
        for c in range(7):
            for d in range(7):
                if (a * d - b * c) % 7 == 1:
                    U = propagator(((a, b), (c, d)), pp)
                    out = U.apply(psi)
                    assert abs(out.norm() - psi.norm()) < 1e-10
                    cases += 1
                    break
            else:
                continue
            break


def test_propagator_norm_preservation_many_states(cat_map):
    pp = PP9
    U = propagator(cat_map, pp)
    rng = np.random.default_rng(12)
    for _ in range(100):
        psi = StateVector(pp, rng.normal(size=pp.N) + 1j * rng.normal(size=pp.N))
        assert abs(U.apply(psi).norm() - psi.norm()) < 1e-8


def test_projective_representation(cat_map):
    pp = PP9
    U1 = propagator(cat_map, pp).entries
    A2 = mat_mul(cat_map.mat(), cat_map.mat())
    U2 = propagator(A2, pp).entries
    P = U1 @ U1
    mask = np.abs(U2) > 0.1
    lam = P[mask][0] / U2[mask][0]
    assert abs(abs(lam) - 1) < 1e-10
    assert np.abs(P - lam * U2).max() < 1e-8


def test_propagator_trace_matches_kernel(cat_map):
    for p, k in [(3, 1), (3, 2), (7, 1)]:
        pp = PrimePower(p, k)
        U = propagator(cat_map, pp)
        ker = fixed_point_count(cat_map, pp)
        assert abs(abs(np.trace(U.entries)) ** 2 - ker) < 1e-8 * max(1, ker)


def test_diagonal_propagator_is_scaled_permutation():
    pp = PrimePower(11, 1)
    x, xinv = 3, pow(3, -1, 11)
    U = propagator(((x, 0), (0, xinv)), pp).entries
    for y in (0, 1, 5, 7):
        col = U @ StateVector.delta(pp, y).amplitudes
        support = np.nonzero(np.abs(col) > 1e-9)[0]
        assert list(support) == [(xinv * y) % 11]
        assert abs(abs(col[support[0]]) - 1) < 1e-10
