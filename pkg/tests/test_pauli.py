import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noniid_shadows.dense import product_state, random_hermitian
from noniid_shadows.errors import DimensionCapExceeded, LengthMismatch
from noniid_shadows.pauli import (
    PauliString,
    WeightedPauliSum,
    compatible,
    observable_to_json,
    parse_observable,
    pauli_decompose,
    pauli_to_dense,
    support,
    traceless_decompose,
)

X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])

pauli_strings = st.integers(1, 4).flatmap(lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n))


def test_pauli_to_dense_z():
    assert np.abs(pauli_to_dense(PauliString("Z")) - np.diag([1, -1])).max() == 0


def test_pauli_to_dense_identity():
    for n in range(1, 5):
        assert np.abs(pauli_to_dense("I" * n) - np.eye(2**n)).max() == 0


def test_pauli_to_dense_xz_matches_kron():
    # element-wise Kronecker product written out by hand
    expected = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for d in range(2):
                    expected[2 * a + c, 2 * b + d] = X[a, b] * Z[c, d]
    assert np.abs(pauli_to_dense("XZ") - expected).max() == 0


def test_pauli_to_dense_cap():
    with pytest.raises(DimensionCapExceeded):
        pauli_to_dense("Z" * 7)
    assert pauli_to_dense("Z" * 7, cap=7).shape == (128, 128)


def test_pauli_to_dense_length_check():
    with pytest.raises(LengthMismatch):
        pauli_to_dense("XZ", n=3)


def test_support_examples():
    assert support(PauliString("XIZ")) == {0, 2}
    assert support(PauliString("III")) == set()
    assert support(PauliString("XYZ")) == {0, 1, 2}
    assert PauliString("XIZ").weight == 2


def test_compatible_examples():
    assert compatible(PauliString("XI"), PauliString("XZ"))
    assert not compatible(PauliString("XI"), PauliString("ZI"))
    assert compatible(PauliString("XI"), PauliString("IZ"))
    with pytest.raises(LengthMismatch):
        compatible(PauliString("X"), PauliString("XX"))


def test_invalid_letters():
    with pytest.raises(ValueError):
        PauliString("XA")
    with pytest.raises(ValueError):
        PauliString("")


def test_traceless_decompose_examples():
    O0, mu = traceless_decompose(Z)
    assert mu == 0 and np.abs(O0 - Z).max() == 0
    O0, mu = traceless_decompose(product_state("0"))
    assert mu == 0.5
    assert np.abs(O0 - Z / 2).max() < 1e-15
    O0, mu = traceless_decompose(np.eye(2))
    assert mu == 1 and np.abs(O0).max() == 0


def test_traceless_reassembly(rng):
    for _ in range(200):
        d = int(rng.choice([2, 4, 8]))
        O = random_hermitian(d, rng)
        O0, mu = traceless_decompose(O)
        assert abs(np.trace(O0)) <= 1e-10
        assert np.abs(O0 + mu * np.eye(d) - O).max() <= 1e-12


@given(pauli_strings)
def test_pauli_squares_to_identity(s):
    P = pauli_to_dense(s)
    assert np.abs(P @ P - np.eye(P.shape[0])).max() <= 1e-12


@given(pauli_strings, st.data())
def test_compatibility_symmetric_reflexive(s, data):
    t = data.draw(st.text(alphabet="IXYZ", min_size=len(s), max_size=len(s)))
    p, q = PauliString(s), PauliString(t)
    assert compatible(p, p)
    assert compatible(p, q) == compatible(q, p)
    assert compatible(p, PauliString.identity(len(s)))


@given(pauli_strings)
def test_weight_matches_support(s):
    p = PauliString(s)
    assert p.weight == len(p.support) == sum(c != "I" for c in s)
    assert 0 <= p.weight <= p.n


def test_weighted_sum_merges_and_drops_zeros():
    H = WeightedPauliSum([(0.5, "XX"), (0.25, "XX"), (1.0, "ZI"), (-1.0, "ZI")])
    assert H.terms == ((0.75, PauliString("XX")),)
    with pytest.raises(LengthMismatch):
        WeightedPauliSum([(1.0, "X"), (1.0, "XX")])
    with pytest.raises(ValueError):
        WeightedPauliSum([(float("nan"), "X")])


def test_weighted_sum_dense_and_identity_part():
    H = WeightedPauliSum([(2.0, "II"), (0.5, "XZ")])
    assert H.identity_coefficient == 2.0
    assert np.abs(H.to_dense() - (2 * np.eye(4) + 0.5 * np.kron(X, Z))).max() == 0
    assert H.traceless_part() == WeightedPauliSum([(0.5, "XZ")])


def test_json_round_trip():
    H = WeightedPauliSum([(0.5, "XX"), (0.3, "XI")])
    assert H.to_json() == [{"coeff": 0.5, "string": "XX"}, {"coeff": 0.3, "string": "XI"}]
    assert parse_observable(H.to_json()) == H
    assert parse_observable([[0.5, "XX"], [0.3, "XI"]]) == H
    assert parse_observable("XIZ") == PauliString("XIZ")
    assert parse_observable({"pauli": "ZZ"}) == PauliString("ZZ")
    M = np.array([[1, 1j], [-1j, 0]])
    assert np.abs(parse_observable(observable_to_json(M)) - M).max() == 0


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_pauli_decompose_round_trip(seed, n):
    O = random_hermitian(2**n, np.random.default_rng(seed))
    assert np.abs(pauli_decompose(O).to_dense() - O).max() < 1e-12
