import numpy as np
import pytest

from noniid_shadows.acquisition import run_acquisition
from noniid_shadows.dense import expectation, ghz_vector, partial_trace_keep, product_state, random_traceless_hermitian
from noniid_shadows.errors import EmptyTrajectory, InvalidState, UnknownRule
from noniid_shadows.frames import (
    CliffordProtocol,
    PauliProtocol,
    conditional_mean,
    draw_effects,
    pauli_draw,
)
from noniid_shadows.pauli import PauliString
from noniid_shadows.sources import (
    DriftSource,
    FunctionSource,
    GhzUnravelSource,
    History,
    Trajectory,
    feedback_source,
    ghz_unravel_source,
    history_parity,
    iid_source,
    linear_drift_source,
    outcome_bit,
    trajectory_average,
)

ZERO, ONE = product_state("0"), product_state("1")
Z = np.diag([1.0, -1.0])


def _history(pairs):
    return History((pauli_draw(b), k) for b, k in pairs)


def _builtin_sources(n=1):
    zeros, ones = product_state("0" * n), product_state("1" * n)
    return [
        iid_source(product_state("+" * n)),
        linear_drift_source(zeros, ones, 50),
        feedback_source("parity_flip", rho_a=zeros, rho_b=ones),
        feedback_source("last_outcome_echo", rho_0=zeros, rho_1=ones),
        feedback_source("worst_case_sign", observable=PauliString("Z" * n), rho_plus=zeros, rho_minus=ones),
    ] + ([ghz_unravel_source(3)] if n == 1 else [])


def test_iid_source():
    src = iid_source(ZERO)
    assert src.next_state(History()) is src.rho
    assert np.abs(src.next_state(_history([("Z", 1), ("X", 0)])) - ZERO).max() == 0
    mixed = iid_source(np.eye(2) / 2)
    assert np.abs(mixed(_history([("Y", 1)])) - np.eye(2) / 2).max() == 0
    with pytest.raises(InvalidState):
        iid_source(np.diag([1.0, 1.0]))


def test_linear_drift_trajectory_average():
    src = linear_drift_source(ONE, ZERO, 4)
    states = [src.next_state(History([(pauli_draw("Z"), 0)] * t)) for t in range(4)]
    assert abs(trajectory_average(Trajectory(states), Z) - 0.25) < 1e-15


def test_drift_ignores_outcomes():
    src = linear_drift_source(ONE, ZERO, 10)
    a = _history([("Z", 0), ("X", 1), ("Y", 0)])
    b = _history([("X", 1), ("Z", 1), ("Y", 1)])
    assert np.array_equal(src.next_state(a), src.next_state(b))


def test_constant_drift_is_iid():
    src = DriftSource(lambda t: ZERO)
    for t in range(5):
        assert np.abs(src.next_state(History([(pauli_draw("Z"), 0)] * t)) - ZERO).max() == 0


def test_parity_flip_rule():
    src = feedback_source("parity_flip", rho_a=ZERO, rho_b=ONE)
    assert np.array_equal(src.next_state(History()), ZERO)
    assert np.array_equal(src.next_state(_history([("Z", 1), ("X", 1), ("Y", 0)])), ZERO)
    assert np.array_equal(src.next_state(_history([("Z", 1), ("X", 0)])), ONE)


def test_parity_counts_all_bits():
    h = History([(pauli_draw("ZZ"), 0b11), (pauli_draw("XZ"), 0b10)])
    assert outcome_bit(pauli_draw("ZZ"), 0b11) == 0
    assert history_parity(h) == 1


def test_last_outcome_echo():
    src = feedback_source("last_outcome_echo", rho_0=ZERO, rho_1=ONE)
    assert np.array_equal(src.next_state(History()), ZERO)
    assert np.array_equal(src.next_state(_history([("Z", 0), ("X", 1)])), ONE)
    assert np.array_equal(src.next_state(_history([("Z", 1), ("X", 0)])), ZERO)


def _worst_case_oracle(pairs):
    """Independent re-implementation of the sign rule on a 1-qubit Pauli record."""
    out = []
    total = 0.0
    for basis, k in pairs:
        out.append("minus" if total > 0 else "plus")
        if basis == "Z":
            total += 3.0 if k == 0 else -3.0
    return out


def test_worst_case_sign_replay():
    pairs = [("Z", 0), ("X", 1), ("Z", 0), ("Z", 1), ("Z", 1), ("Z", 1), ("Y", 0), ("Z", 0), ("Z", 0), ("Z", 0)]
    src = feedback_source("worst_case_sign", observable=PauliString("Z"), rho_plus=ZERO, rho_minus=ONE)
    expected = _worst_case_oracle(pairs)
    h = History()
    for (basis, k), label in zip(pairs, expected):
        rho = src.next_state(h)
        assert np.array_equal(rho, ONE if label == "minus" else ZERO)
        h.append(pauli_draw(basis), k)
    assert "minus" in expected and expected.count("plus") > 1


def test_unknown_rule():
    with pytest.raises(UnknownRule):
        feedback_source("telepathy")


def test_measurability_bit_identical(rng):
    for n in (1, 2):
        for src in _builtin_sources(n):
            protocol = PauliProtocol(n)
            record, _ = run_acquisition(src, protocol, 100, int(rng.integers(2**31)))
            for t in range(0, 100, 7):
                a = src.next_state(record.history(t))
                b = src.next_state(record.history(t))
                assert np.array_equal(a, b)


def test_martingale_centering_builtin(rng):
    for n, protocol in ((1, PauliProtocol(1)), (2, PauliProtocol(2)), (1, CliffordProtocol(1))):
        draws = protocol.enumerate_draws()
        for src in _builtin_sources(n):
            O = random_traceless_hermitian(2**n, rng)
            record, _ = run_acquisition(src, protocol, 100, int(rng.integers(2**31)))
            for t in range(100):
                rho = src.next_state(record.history(t))
                assert abs(conditional_mean(draws, O, rho) - expectation(O, rho)) < 1e-9


def test_ghz_first_round_mixed():
    src = ghz_unravel_source(3)
    assert np.abs(src.next_state(History()) - np.eye(2) / 2).max() < 1e-15
    assert np.abs(partial_trace_keep(ghz_vector(3), 3, 0) - np.eye(2) / 2).max() < 1e-15


def test_ghz_collapse_after_z():
    src = ghz_unravel_source(3)
    for k, target in ((0, ZERO), (1, ONE)):
        h = _history([("Z", k)])
        assert np.abs(src.next_state(h) - target).max() < 1e-12
        h.append(pauli_draw("X"), 0)
        assert np.abs(src.next_state(h) - target).max() < 1e-12


def test_ghz_shot_boundary_resets():
    src = ghz_unravel_source(2)
    h = _history([("Z", 0), ("Z", 0)])
    assert np.abs(src.next_state(h) - np.eye(2) / 2).max() < 1e-15


def test_ghz_z_shot_distribution():
    src = GhzUnravelSource(3)
    for k in range(8):
        bits = [(k >> (2 - q)) & 1 for q in range(3)]
        h = History()
        p = 1.0
        for b in bits:
            rho = src.next_state(h)
            p *= float(np.real(np.trace(draw_effects(pauli_draw("Z"))[b] @ rho)))
            if p == 0:
                break
            h.append(pauli_draw("Z"), b)
        assert abs(p - (0.5 if k in (0, 7) else 0.0)) < 1e-12


def test_ghz_zero_probability_history():
    src = GhzUnravelSource(2)
    with pytest.raises(InvalidState):
        src.conditional_vector([(pauli_draw("Z"), 0), (pauli_draw("Z"), 1)])


def test_ghz_trajectory_example():
    traj = Trajectory([np.eye(2) / 2, ZERO, ZERO])
    assert abs(trajectory_average(traj, Z) - 2 / 3) < 1e-15


def test_trajectory_average_iid():
    assert trajectory_average(Trajectory([ZERO] * 17), Z) == 1.0
    with pytest.raises(EmptyTrajectory):
        trajectory_average(Trajectory([]), Z)


def test_function_source():
    src = FunctionSource(lambda h: ONE if len(h) % 2 else ZERO, 2)
    assert np.array_equal(src.next_state(History()), ZERO)
    assert np.array_equal(src.next_state(_history([("Z", 0)])), ONE)


def test_history_fold_is_incremental():
    calls = []

    def step(acc, d, k):
        calls.append(k)
        return acc + k

    h = _history([("Z", 1), ("Z", 0), ("Z", 1)])
    assert h.fold("s", step, 0) == 2
    h.append(pauli_draw("Z"), 1)
    assert h.fold("s", step, 0) == 3
    assert len(calls) == 4
    assert h.prefix(2).outcomes == (1, 0)

