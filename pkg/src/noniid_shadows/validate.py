"""Exact-enumeration oracle suites behind ``validate``.

Every suite recomputes a known identity from first principles and compares it
with the library. Library entry points are looked up through their modules at
call time, so a patched ``frames.dual_frame`` or planner constant is seen.
"""
import time
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import estimators, frames, process
from .acquisition import run_acquisition
from .dense import (
    expectation,
    ghz_vector,
    maximally_mixed,
    product_state,
    random_density_matrix,
    random_traceless_hermitian,
)
from .pauli import PauliString, WeightedPauliSum
from .sources import (
    GhzUnravelSource,
    History,
    IidSource,
    LastOutcomeEchoSource,
    ParityFlipSource,
    WorstCaseSignSource,
    linear_drift_source,
)

SEED = 20240501


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _reconstruct(povm, dual, rho):
    p = np.einsum("kij,ji->k", povm.effects, rho).real
    return np.einsum("k,kij->ij", p, dual)


def suite_unbiasedness(rng):
    """``sum_k tr(rho E_k) rho_hat_k = rho`` for Pauli-6 (n = 1, 2) and the 24-element Clifford POVM."""
    worst = 0.0
    for povm in (frames.pauli6_povm(1), frames.pauli6_povm(2), frames.clifford_povm(1)):
        dual = frames.dual_frame(povm)
        for _ in range(50):
            rho = random_density_matrix(povm.d, rng)
            worst = max(worst, np.abs(_reconstruct(povm, dual, rho) - rho).max())
    return worst <= 1e-9, f"max entrywise deviation {worst:.2e} (tol 1e-9)"


def suite_depolarizing_identity(rng):
    """Averaging the 24 single-qubit Clifford measurements gives ``rho -> (rho + tr(rho) 1) / 3``.

    The weighted 48-effect POVM has frame operator ``1/24`` of this average.
    """
    draws = frames.CliffordProtocol(1).enumerate_draws()
    s = sum(w * frames.frame_superoperator(frames.draw_effects(draw)) for w, draw in draws)
    worst = np.abs(24 * frames.frame_superoperator(frames.clifford_povm(1)) - s).max()
    for _ in range(50):
        rho = random_density_matrix(2, rng)
        target = (rho + np.trace(rho) * np.eye(2)) / 3
        worst = max(worst, np.abs(frames.apply_superoperator(s, rho) - target).max())
    return worst <= 1e-12, f"max deviation {worst:.2e} (tol 1e-12)"


def suite_shadow_norms(rng):
    """Pauli protocol: weight-k strings have norm 3^k. Clifford: exact norm <= 3 tr(O^2)."""
    povm = frames.pauli6_povm(3)
    worst = 0.0
    for k, s in enumerate(["ZII", "XYI", "ZXY"], start=1):
        worst = max(worst, abs(frames.shadow_norm_exact(povm, PauliString(s)) - 3**k))
    cliff = frames.clifford_povm(1)
    slack = -np.inf
    for _ in range(100):
        O = random_traceless_hermitian(2, rng)
        slack = max(slack, frames.shadow_norm_exact(cliff, O) - frames.clifford_norm_bound(O))
    ok = worst <= 1e-9 and slack <= 1e-9
    return ok, f"Pauli 3^k deviation {worst:.2e}; worst Clifford excess over 3tr(O^2) {slack:.2e}"


def _truncation_moments(O, rho, T):
    ex = ey = 0.0
    for w, draw in frames.PauliProtocol(1).enumerate_draws():
        p = frames.born_probabilities(draw, rho)
        x = frames.shadow_values(O, draw)
        ex += w * float(p @ x)
        ey += w * float(p @ estimators.truncate(x, T))
    return ex, ey


def suite_bias_bound(rng):
    """``|E[Y] - E[X]| <= ||O||^2 / (4T)``; at the planned ``T`` the bias is at most ``eps / 5``."""
    povm = frames.pauli6_povm(1)
    worst = -np.inf
    worst_eps = -np.inf
    for _ in range(50):
        O = random_traceless_hermitian(2, rng)
        rho = random_density_matrix(2, rng)
        norm = frames.shadow_norm_exact(povm, O)
        T = rng.uniform(0.1, 1.0) * np.sqrt(norm)
        ex, ey = _truncation_moments(O, rho, T)
        worst = max(worst, abs(ey - ex) - norm / (4 * T))
        eps = rng.uniform(0.05, 2.0)
        ex, ey = _truncation_moments(O, rho, estimators.threshold(norm, eps))
        worst_eps = max(worst_eps, abs(ey - ex) - eps / 5)
    ok = worst <= 1e-12 and worst_eps <= 1e-12
    return ok, f"worst excess over norm/(4T) {worst:.2e}; over eps/5 {worst_eps:.2e}"


def _random_two_term(rng, n):
    letters = "IXYZ"
    while True:
        a, b = ("".join(rng.choice(list(letters), size=n)) for _ in range(2))
        if a != b and set(a) != {"I"} and set(b) != {"I"}:
            break
    c = rng.normal(size=2)
    return WeightedPauliSum([(c[0], a), (c[1], b)])


def suite_v_h(rng):
    """Golden value ``V_H(0.5 XX + 0.3 XI) = 3.42`` and ``V_H >=`` exact Pauli shadow norm."""
    golden = estimators.v_H(WeightedPauliSum([(0.5, "XX"), (0.3, "XI")]))
    worst = -np.inf
    povms = {n: frames.pauli6_povm(n) for n in (1, 2, 3)}
    for i in range(50):
        n = 2 + i % 2 if i % 5 else 1
        H = _random_two_term(rng, n) if n > 1 else WeightedPauliSum([(rng.normal(), "X"), (rng.normal(), "Z")])
        worst = max(worst, frames.shadow_norm_exact(povms[n], H) - estimators.v_H(H))
    ok = abs(golden - 3.42) <= 1e-12 and worst <= 1e-9
    return ok, f"V_H golden {golden:.12g}; worst exact - V_H {worst:.2e}"


def suite_planner(rng):
    """Golden planner values."""
    a = estimators.plan_samples(0.25, 0.1, [9])
    b = estimators.plan_samples(0.1, 0.05, [3])
    c = estimators.plan_samples(0.2, 0.05, [2], regime="clifford")
    got = (a.n_rounds, a.thresholds[0], b.n_rounds, c.n_rounds)
    want = (2247, 45.0, 5764, 2882)
    ok = got[0] == want[0] and abs(got[1] - want[1]) < 1e-12 and got[2:] == want[2:]
    return ok, f"got N/T {got}, expected {want}"


def _state_sources(n):
    d = 2**n
    zeros, ones = "0" * n, "1" * n
    plus, minus = "+" * n, "-" * n
    obs = PauliString("Z" * n)
    return [
        ("iid", IidSource(product_state(plus))),
        ("linear_drift", linear_drift_source(product_state(zeros), maximally_mixed(d), 100)),
        ("parity_flip", ParityFlipSource(product_state(zeros), product_state(ones))),
        ("last_outcome_echo", LastOutcomeEchoSource(product_state(plus), product_state(minus))),
        ("worst_case_sign", WorstCaseSignSource(obs, product_state(zeros), product_state(ones))),
    ]


def suite_martingale_centering(rng, n_histories=100):
    """``sum_k P(k | h) tr(O rho_hat_k) = tr(O rho_t(h))`` along sampled histories of every source."""
    worst = 0.0
    cases = []
    for n in (1, 2):
        for name, src in _state_sources(n):
            cases.append((f"{name}/pauli{n}", src, frames.PauliProtocol(n)))
    for name, src in _state_sources(1):
        cases.append((f"{name}/clifford1", src, frames.CliffordProtocol(1)))
    cases.append(("ghz_unravel/pauli1", GhzUnravelSource(3), frames.PauliProtocol(1)))
    for label, src, protocol in cases:
        draws = protocol.enumerate_draws()
        O = random_traceless_hermitian(protocol.dim, rng)
        record, traj = run_acquisition(src, protocol, n_histories, int(rng.integers(2**32)))
        for t in range(n_histories):
            rho = src.next_state(record.history(t))
            if rho is not traj.states[t] and np.abs(rho - traj.states[t]).max() > 0:
                return False, f"{label}: replay mismatch at round {t + 1}"
            dev = abs(frames.conditional_mean(draws, O, rho) - expectation(O, rho))
            worst = max(worst, dev)
    protocol = process.pauli6_process_protocol()
    L = len(protocol.ensemble)
    chan_sources = [
        ("fixed", process.FixedChannelSource(process.depolarizing_channel(0.3))),
        ("parity_switch", process.ParityChannelSource(process.identity_channel(), process.bitflip_channel(0.9))),
        ("rz_drift", process.rz_drift_source(0.0, np.pi, n_histories)),
    ]
    for label, src in chan_sources:
        O = random_traceless_hermitian(4, rng)
        record, _ = process.run_process_acquisition(src, protocol, n_histories, int(rng.integers(2**32)))
        for t in range(n_histories):
            ch = src.next_channel(record.history(t))
            total = 0.0
            for _, draw in protocol.enumerate_draws():
                p = protocol.born(draw, ch)
                total += float(p @ frames.shadow_values(O, draw)) / L
            worst = max(worst, abs(total - expectation(O, ch.choi())))
    return worst <= 1e-9, f"{len(cases) + len(chan_sources)} sources, max deviation {worst:.2e} (tol 1e-9)"


def ghz_distribution_gap(n=3):
    """Largest gap between the sequential-unravelling and direct GHZ outcome distributions."""
    psi = ghz_vector(n)
    worst = 0.0
    for letters in product("XYZ", repeat=n):
        joint = frames.pauli_draw("".join(letters))
        direct = np.einsum("i,kij,j->k", psi.conj(), frames.draw_effects(joint), psi).real
        local = [frames.pauli_draw(c) for c in letters]
        for k in range(2**n):
            bits = [(k >> (n - 1 - q)) & 1 for q in range(n)]
            src = GhzUnravelSource(n)
            h = History()
            p = 1.0
            for q in range(n):
                rho = src.next_state(h)
                p *= frames.born_probabilities(local[q], rho)[bits[q]]
                if p == 0:
                    break
                h.append(local[q], bits[q])
            worst = max(worst, abs(p - direct[k]))
    return worst


def suite_ghz_distribution(rng):
    gap = ghz_distribution_gap(3)
    return gap <= 1e-12, f"max probability gap {gap:.2e} over 27 bases x 8 outcomes"


def suite_choi_unbiasedness(rng):
    """Pauli-6 inputs and Pauli-6 outputs: ``sum_jk p_jk rho_hat_jk = rho_Lambda`` for 20 random channels."""
    ens = process.pauli6_ensemble()
    out = frames.pauli6_povm(1)
    bip = process.process_povm(ens, out)
    dual = frames.dual_frame(bip)
    L, M = len(ens), len(out)
    worst = worst_born = 0.0
    for _ in range(20):
        ch = process.random_channel(2, rng, n_kraus=int(rng.integers(1, 5)))
        rho = ch.choi()
        p = np.array([out.probabilities(ch.apply(s)) for s in ens.states]).reshape(L * M) / L
        worst = max(worst, np.abs(np.einsum("k,kij->ij", p, dual) - rho).max())
        p_bip = bip.probabilities(rho)
        worst_born = max(worst_born, np.abs(p - p_bip).max())
    ok = worst <= 1e-9 and worst_born <= 1e-12
    return ok, f"max Choi deviation {worst:.2e} (tol 1e-9); Born gap {worst_born:.2e} (tol 1e-12)"


SUITES = {
    "unbiasedness": suite_unbiasedness,
    "depolarizing_identity": suite_depolarizing_identity,
    "shadow_norms": suite_shadow_norms,
    "bias_bound": suite_bias_bound,
    "v_h": suite_v_h,
    "planner": suite_planner,
    "martingale_centering": suite_martingale_centering,
    "ghz_distribution": suite_ghz_distribution,
    "choi_unbiasedness": suite_choi_unbiasedness,
}


def cmd_validate(names=None, seed=SEED):
    """Run the named suites (all by default). Exceptions count as failures."""
    results = []
    for name in names or SUITES:
        rng = np.random.default_rng([seed, len(results)])
        start = time.perf_counter()
        try:
            ok, detail = SUITES[name](rng)
        except Exception as exc:  # reported, not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(SuiteResult(name, bool(ok), detail, time.perf_counter() - start))
    return results


def all_passed(results):
    return all(r.passed for r in results)


__all__ = ["SuiteResult", "SUITES", "cmd_validate", "all_passed", "ghz_distribution_gap"]
