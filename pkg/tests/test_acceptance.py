"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget."""
import time

import numpy as np

from noniid_shadows import frames
from noniid_shadows.dense import random_density_matrix
from noniid_shadows.estimators import plan_for_protocol, plan_samples, truncated_mean
from noniid_shadows.frames import PauliProtocol, clifford_povm, pauli6_povm
from noniid_shadows.harness import cmd_experiment
from noniid_shadows.pauli import PauliString
from noniid_shadows.process import (
    FixedChannelSource,
    ParityChannelSource,
    bitflip_channel,
    identity_channel,
    pauli6_process_protocol,
    plan_process,
    run_process_acquisition,
)
from noniid_shadows.acquisition import RngStreamSpec, run_acquisition
from noniid_shadows.sources import GhzUnravelSource
from noniid_shadows.validate import SEED, cmd_validate, ghz_distribution_gap

# bit-flip strength of the odd-parity branch in criterion 9
ADAPTIVE_BITFLIP_P = 0.9


def _suite(name):
    (res,) = cmd_validate([name], seed=SEED)
    return res


def _pinv_dual(effects):
    # independent dual: least-squares inverse of the frame matrix on row-major vecs
    A = effects.reshape(len(effects), -1)
    S = A.T @ A.conj()
    return (np.linalg.pinv(S) @ A.T).T.reshape(effects.shape)


def test_criterion_1_unbiasedness(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = dual_gap = 0.0
    for povm in (pauli6_povm(1), pauli6_povm(2), clifford_povm(1)):
        dual = frames.dual_frame(povm)
        dual_gap = max(dual_gap, np.abs(dual - _pinv_dual(povm.effects)).max())
        for _ in range(50):
            rho = random_density_matrix(povm.d, rng)
            p = np.einsum("kij,ji->k", povm.effects, rho).real
            worst = max(worst, np.abs(np.einsum("k,kij->ij", p, dual) - rho).max())
    secs = time.perf_counter() - start
    ok = worst <= 1e-9 and dual_gap <= 1e-9 and secs < 5
    assert acceptance(1, ok, f"max reconstruction deviation {worst:.1e}, dual vs pinv {dual_gap:.1e}, {secs:.2f}s")


def test_criterion_2_depolarizing_frame(acceptance):
    res = _suite("depolarizing_identity")
    ok = res.passed and res.seconds < 1
    assert acceptance(2, ok, f"{res.detail}, {res.seconds:.2f}s")


def test_criterion_3_shadow_norms(acceptance):
    res = _suite("shadow_norms")
    ok = res.passed and res.seconds < 30
    assert acceptance(3, ok, f"{res.detail}, {res.seconds:.2f}s")


def test_criterion_4_bias_bound(acceptance):
    res = _suite("bias_bound")
    ok = res.passed and res.seconds < 5
    assert acceptance(4, ok, f"{res.detail}, {res.seconds:.2f}s")


def test_criterion_5_v_h(acceptance):
    res = _suite("v_h")
    ok = res.passed and res.seconds < 30
    assert acceptance(5, ok, f"{res.detail}, {res.seconds:.2f}s")


def test_criterion_6_planner(acceptance):
    a = plan_samples(0.25, 0.1, [9])
    b = plan_samples(0.1, 0.05, [3])
    c = plan_samples(0.2, 0.05, [2], regime="clifford")
    got = (a.n_rounds, a.thresholds[0], b.n_rounds, c.n_rounds)
    ok = got == (2247, 45.0, 5764, 2882)
    assert acceptance(6, ok, f"N/T/N/N = {got}")


def test_criterion_7_noniid_coverage(acceptance):
    start = time.perf_counter()
    config = {
        "schema_version": 1,
        "protocol": "pauli",
        "n": 2,
        "observables": ["ZZ"],
        "epsilon": 0.25,
        "delta": 0.1,
        # ZZ = +1 on |00>, -1 on |01>: each outcome-parity flip reverses the target sign
        "source": {"type": "parity_flip", "params": {"rho_a": "00", "rho_b": "01"}},
        "trials": 500,
        "seed": SEED,
    }
    report = cmd_experiment(config)
    secs = time.perf_counter() - start
    (s,) = report.summary
    ok = s["N"] == 2247 and s["trials"] == 500 and s["failure_rate"] <= 0.1 and secs < 120
    assert acceptance(
        7, ok, f"parity_flip ZZ, N={s['N']}, failure rate {s['failure_rate']:.3f} over {s['trials']} trials, {secs:.1f}s"
    )


def test_criterion_8_ghz_unraveling(acceptance):
    start = time.perf_counter()
    gap = ghz_distribution_gap(3)
    protocol = PauliProtocol(1)
    Z = PauliString("Z")
    plan = plan_for_protocol(protocol, [Z], 0.2, 0.1)
    hits = 0
    for trial in range(200):
        record, traj = run_acquisition(GhzUnravelSource(3), protocol, plan.n_rounds, RngStreamSpec(SEED, trial))
        hits += truncated_mean(record, Z, plan.thresholds[0], trajectory=traj).error <= 0.2
    secs = time.perf_counter() - start
    ok = gap <= 1e-12 and hits >= 180 and secs < 60
    assert acceptance(8, ok, f"GHZ gap {gap:.1e}, {hits}/200 within 0.2 at N={plan.n_rounds}, {secs:.1f}s")


def _process_coverage(source_factory, protocol, plan, trials=200):
    ZZ = PauliString("ZZ")
    hits, o_bars = 0, []
    for trial in range(trials):
        rec, traj = run_process_acquisition(source_factory(), protocol, plan.n_rounds, RngStreamSpec(SEED, trial))
        r = truncated_mean(rec, ZZ, plan.thresholds[0], trajectory=traj)
        hits += r.error <= 0.25
        o_bars.append(r.o_bar)
    return hits, np.array(o_bars)


def test_criterion_9_process_shadows(acceptance):
    start = time.perf_counter()
    res = _suite("choi_unbiasedness")
    protocol = pauli6_process_protocol()
    bip = protocol.bipartite
    assert len(bip) == 36
    plan = plan_process(protocol, PauliString("ZZ"), 0.25, 0.1)
    hits_id, bars_id = _process_coverage(lambda: FixedChannelSource(identity_channel()), protocol, plan)
    adaptive = lambda: ParityChannelSource(identity_channel(), bitflip_channel(ADAPTIVE_BITFLIP_P))  # noqa: E731
    hits_ad, bars_ad = _process_coverage(adaptive, protocol, plan)
    secs = time.perf_counter() - start
    ok = (
        res.passed
        and np.abs(bars_id - 1).max() < 1e-12
        and hits_id >= 180
        and hits_ad >= 180
        and bars_ad.std() > 0
        and secs < 120
    )
    assert acceptance(
        9,
        ok,
        f"{res.detail}; N={plan.n_rounds}; identity {hits_id}/200, adaptive bit-flip {hits_ad}/200, {secs:.1f}s",
    )


def test_criterion_10_martingale_centering(acceptance):
    res = _suite("martingale_centering")
    ok = res.passed and res.seconds < 10
    assert acceptance(10, ok, f"{res.detail}, {res.seconds:.2f}s")

