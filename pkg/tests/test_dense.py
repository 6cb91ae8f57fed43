import numpy as np
import pytest

from noniid_shadows.dense import (
    as_density_matrix,
    check_density_matrix,
    decode_matrix,
    encode_matrix,
    ghz_vector,
    ket_to_dm,
    partial_trace_keep,
    product_state,
    random_density_matrix,
)
from noniid_shadows.errors import InvalidState


def test_product_state_labels():
    assert np.abs(product_state("0") - np.diag([1, 0])).max() == 0
    plus = product_state("+")
    assert np.abs(plus - 0.5 * np.ones((2, 2))).max() < 1e-15
    r = product_state("r")
    Y = np.array([[0, -1j], [1j, 0]])
    assert abs(np.trace(Y @ r) - 1) < 1e-15
    assert product_state("01").shape == (4, 4)
    assert product_state("01")[1, 1] == 1


def test_density_matrix_validation():
    with pytest.raises(InvalidState):
        check_density_matrix(np.diag([0.5, 0.6]))
    with pytest.raises(InvalidState):
        check_density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidState):
        check_density_matrix(np.array([[0.5, 1], [0, 0.5]]))
    rho = as_density_matrix(np.eye(2) / 2)
    with pytest.raises(ValueError):
        rho[0, 0] = 1


def test_random_density_matrix_valid(rng):
    for d in (2, 4, 8):
        for rank in (1, None):
            rho = random_density_matrix(d, rng, rank=rank)
            check_density_matrix(rho)


def test_matrix_encoding_round_trip(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.abs(decode_matrix(encode_matrix(m)) - m).max() == 0


def test_ghz_marginal_is_mixed():
    psi = ghz_vector(3)
    for q in range(3):
        assert np.abs(partial_trace_keep(psi, 3, q) - np.eye(2) / 2).max() < 1e-15
    rho = ket_to_dm(ghz_vector(2))
    assert np.abs(rho[[0, 0, 3, 3], [0, 3, 0, 3]] - 0.5).max() < 1e-15
