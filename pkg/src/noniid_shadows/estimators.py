"""Observable estimation from measurement records and sample-size planning.

The main estimator is the symmetrically truncated mean: single-shot values
``X_t = tr(O rho_hat_t)`` are clamped to ``[-T, T]`` and averaged. With
``T = (5/4) ||O||^2 / eps`` the truncation bias is at most ``eps / 5`` per
round, and the remaining martingale fluctuation is controlled by Freedman's
inequality, giving the planner constants below. Logarithms are natural.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyRecord,
    IdentityTermPresent,
    InvalidProbability,
    NegativeThreshold,
    NonPositiveInput,
    TooFewRounds,
)
from .frames import (
    PAULI_BASES,
    clifford_norm_bound,
    shadow_norm_exact,
    shadow_values,
    single_shot_value,
)
from .pauli import (
    PauliString,
    WeightedPauliSum,
    compatible,
    observable_qubits,
    observable_to_dense,
    pauli_decompose,
    traceless_decompose,
)
from .sources import trajectory_average

#: ``N >= GENERAL_CONSTANT * max ||O||^2 / eps^2 * ln(2K / delta)``
GENERAL_CONSTANT = 125 / 24
#: Global Clifford: ``N >= CLIFFORD_CONSTANT * tr(O^2) / eps^2 * ln(2 / delta)``
CLIFFORD_CONSTANT = 125 / 8
#: ``T = THRESHOLD_CONSTANT * ||O||^2 / eps``
THRESHOLD_CONSTANT = 5 / 4


@dataclass
class ObservablePlan:
    norm_sq: float
    threshold: float
    norm_source: str = "given"


@dataclass
class EstimationPlan:
    epsilon: float
    delta: float
    observables: list
    n_rounds: int
    regime: str = "general"
    log_base: str = "e"

    @property
    def K(self):
        return len(self.observables)

    @property
    def thresholds(self):
        return [o.threshold for o in self.observables]

    @property
    def norms_sq(self):
        return [o.norm_sq for o in self.observables]

    def to_json(self):
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "K": self.K,
            "N": self.n_rounds,
            "regime": self.regime,
            "log": "natural",
            "observables": [
                {"norm_sq": o.norm_sq, "T": o.threshold, "norm_source": o.norm_source} for o in self.observables
            ],
        }


@dataclass
class EstimateResult:
    o_hat: float
    threshold: float
    n_rounds: int
    truncation_hits: int
    variance: float
    o_bar: float = None
    identity_part: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def error(self):
        return None if self.o_bar is None else abs(self.o_hat - self.o_bar)

    def to_json(self):
        return {
            "o_hat": self.o_hat,
            "o_bar": self.o_bar,
            "abs_err": self.error,
            "T": self.threshold,
            "N": self.n_rounds,
            "diagnostics": {
                "truncation_hits": self.truncation_hits,
                "variance_Y": self.variance,
                "identity_part": self.identity_part,
                **self.extra,
            },
        }


# --- single-shot values -----------------------------------------------------------------


def _pauli_values_vectorised(P, bases, bits):
    out = np.ones(len(bases))
    for q in P.support:
        letter = PAULI_BASES.index(P.letters[q])
        out *= np.where(bases[:, q] == letter, 3.0 - 6.0 * bits[:, q], 0.0)
    return out


def _split_identity(O):
    """Return ``(traceless part, mu)`` for any supported observable type."""
    if isinstance(O, PauliString):
        return (None, 1.0) if O.is_identity() else (O, 0.0)
    if isinstance(O, WeightedPauliSum):
        rest = O.traceless_part()
        return (rest if len(rest) else None), O.identity_coefficient
    O0, mu = traceless_decompose(O)
    return (None if np.abs(O0).max() == 0 else O0), mu


def single_shot_values(record, O):
    """``X_t = tr(O rho_hat_{k_t})`` for every round, as an array.

    ``O`` may be a list of observables applied cyclically by round (one per
    site in a spatially unravelled shot).
    """
    n = len(record)
    if isinstance(O, list):
        out = np.empty(n)
        for s, obs in enumerate(O):
            idx = np.arange(s, n, len(O))
            out[idx] = _values_for(record, obs, idx)
        return out
    return _values_for(record, O, np.arange(n))


def _values_for(record, O, idx):
    draws = [record.draws[i] for i in idx]
    outcomes = np.asarray([record.outcomes[i] for i in idx], dtype=np.int64)
    if len(draws) == 0:
        return np.empty(0)
    if draws[0].kind == "pauli" and isinstance(O, PauliString | WeightedPauliSum):
        nq = len(draws[0].bases)
        if O.n != nq:
            raise DimensionMismatch(f"observable on {O.n} qubits, record on {nq}")
        bases = np.array([d.bases for d in draws], dtype=np.int64).reshape(len(draws), nq)
        bits = (outcomes[:, None] >> np.arange(nq - 1, -1, -1)[None, :]) & 1
        if isinstance(O, PauliString):
            return _pauli_values_vectorised(O, bases, bits)
        total = np.zeros(len(draws))
        for c, p in O.terms:
            total += c * _pauli_values_vectorised(p, bases, bits)
        return total
    dense = observable_to_dense(O)
    tables = {}
    out = np.empty(len(draws))
    for i, (d, k) in enumerate(zip(draws, outcomes)):
        key = d.key
        tab = tables.get(key)
        if tab is None:
            tab = tables[key] = shadow_values(dense, d)
        out[i] = tab[k]
    return out


# --- truncation and estimators -----------------------------------------------------------


def truncate(x, T):
    """Clamp to ``[-T, T]``; values with ``|x| == T`` are returned unchanged."""
    if T < 0:
        raise NegativeThreshold(f"threshold must be non-negative, got {T}")
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= T, x, T * np.sign(x))
    return float(out) if out.ndim == 0 else out


def truncated_mean(record, O, T, trajectory=None):
    """Truncated-mean estimate of the time-averaged expectation of ``O``.

    The identity part ``mu = tr(O)/d`` is split off first and added back
    exactly; truncation applies to the traceless part only.
    """
    if len(record) == 0:
        raise EmptyRecord("record has no rounds")
    if T < 0:
        raise NegativeThreshold(f"threshold must be non-negative, got {T}")
    if isinstance(O, list):
        parts = [_split_identity(o) for o in O]
        mu = float(np.mean(np.resize([m for _, m in parts], len(record))))
        sites = [p if p is not None else np.zeros_like(observable_to_dense(o)) for (p, _), o in zip(parts, O)]
        x = single_shot_values(record, sites)
    else:
        O0, mu = _split_identity(O)
        x = np.zeros(len(record)) if O0 is None else single_shot_values(record, O0)
    y = np.atleast_1d(truncate(x, T))
    hits = int(np.sum(np.abs(x) > T))
    o_bar = trajectory_average(trajectory, O) if trajectory is not None else None
    return EstimateResult(
        o_hat=float(np.mean(y)) + mu,
        threshold=float(T),
        n_rounds=len(record),
        truncation_hits=hits,
        variance=float(np.var(y)),
        o_bar=o_bar,
        identity_part=mu,
    )


def plain_mean(record, O):
    if len(record) == 0:
        raise EmptyRecord("record has no rounds")
    O0, mu = _split_identity(O)
    if O0 is None:
        return mu
    return float(np.mean(single_shot_values(record, O0))) + mu


def median_of_means(record, O, batches):
    """Median of per-batch plain means; rounds beyond ``batches * (N // batches)`` are dropped."""
    n = len(record)
    if batches < 1 or n < batches:
        raise TooFewRounds(f"cannot split {n} rounds into {batches} batches")
    O0, mu = _split_identity(O)
    if O0 is None:
        return mu
    x = single_shot_values(record, O0)
    size = n // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(np.median(means)) + mu


# --- planning ------------------------------------------------------------------------------


def threshold(norm_sq, epsilon):
    if norm_sq <= 0 or epsilon <= 0:
        raise NonPositiveInput("shadow norm and accuracy must be positive")
    return THRESHOLD_CONSTANT * norm_sq / epsilon


def _check_eps_delta(epsilon, delta):
    if not epsilon > 0:
        raise NonPositiveInput(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise InvalidProbability(f"delta must lie in (0, 1), got {delta}")


def plan_samples(epsilon, delta, norms_sq, regime="general", norm_sources=None):
    """Round count and per-observable thresholds for ``K = len(norms_sq)`` observables.

    In the ``clifford`` regime ``norms_sq`` are ``tr(O^2)`` values; thresholds
    then use the shadow-norm bound ``3 tr(O^2)``.
    """
    _check_eps_delta(epsilon, delta)
    norms_sq = [float(v) for v in norms_sq]
    if not norms_sq:
        raise NonPositiveInput("need at least one observable")
    if any(v <= 0 for v in norms_sq):
        raise NonPositiveInput("norms must be positive")
    K = len(norms_sq)
    log_term = math.log(2 * K / delta)
    if regime == "general":
        n = GENERAL_CONSTANT * max(norms_sq) / epsilon**2 * log_term
        shadow = norms_sq
    elif regime == "clifford":
        n = CLIFFORD_CONSTANT * max(norms_sq) / epsilon**2 * log_term
        shadow = [3 * v for v in norms_sq]
    else:
        raise ValueError(f"unknown regime {regime!r}")
    sources = norm_sources or ["given"] * K
    obs = [ObservablePlan(s, threshold(s, epsilon), src) for s, src in zip(shadow, sources)]
    return EstimationPlan(epsilon, delta, obs, math.ceil(n), regime)


def v_H(H):
    """``sum_j sum_{l : P_j ~ P_l} |a_j a_l| 3^{|supp P_j & supp P_l|}`` over ordered pairs."""
    terms = list(H.terms)
    if any(p.is_identity() for _, p in terms):
        raise IdentityTermPresent("remove the identity term before computing V_H")
    total = 0.0
    for a, p in terms:
        for b, q in terms:
            if compatible(p, q):
                total += abs(a * b) * 3 ** len(p.support & q.support)
    return total


def shadow_norm_sq(O, protocol, exact_qubit_limit=3):
    """Shadow-norm value (or bound) for ``O`` under ``protocol`` and its provenance label.

    Labels: ``3^w`` (single Pauli string), ``V_H`` (Pauli sums, or dense
    observables above ``exact_qubit_limit`` after Pauli decomposition),
    ``3tr(O^2)`` (global Clifford), ``exact`` (enumerated POVM eigenvalue).
    """
    O0, _ = _split_identity(O)
    if O0 is None:
        raise NonPositiveInput("observable has no traceless part")
    name = protocol.name
    if name == "pauli":
        if isinstance(O0, PauliString):
            return float(3**O0.weight), "3^w"
        if isinstance(O0, WeightedPauliSum):
            return v_H(O0), "V_H"
        if observable_qubits(O0) <= exact_qubit_limit:
            return shadow_norm_exact(protocol.povm(), O0), "exact"
        return v_H(pauli_decompose(O0).traceless_part()), "V_H"
    if name == "clifford":
        return clifford_norm_bound(O0), "3tr(O^2)"
    return shadow_norm_exact(protocol.povm(), observable_to_dense(O0)), "exact"


def plan_for_protocol(protocol, observables, epsilon, delta):
    """Sample-count plan with norms taken from :func:`shadow_norm_sq`."""
    vals, srcs = zip(*(shadow_norm_sq(o, protocol) for o in observables))
    if protocol.name == "clifford":
        return plan_samples(epsilon, delta, [v / 3 for v in vals], regime="clifford", norm_sources=list(srcs))
    return plan_samples(epsilon, delta, list(vals), norm_sources=list(srcs))


# --- Freedman tail report ---------------------------------------------------------------


def freedman_bound(x, v, R):
    """``2 exp(-x^2 / (2v + 2Rx/3))`` for ``|sum Z_t| >= x`` with ``V_N <= v``, ``|Z_t| <= R``."""
    return 2.0 * math.exp(-(x**2) / (2 * v + 2 * R * x / 3))


def tail_curve(deviations, n_rounds, norm_sq, T, points=20):
    """Empirical ``P(|M_N| >= x)`` against the Freedman bound on a grid of ``x``.

    ``deviations`` are per-trial values of the normalised fluctuation
    ``M_N = (1/N) sum_t (Y_t - E[Y_t | past])``.
    """
    dev = np.abs(np.asarray(deviations, dtype=float))
    grid = np.linspace(0, max(dev.max(), 1e-12), points + 1)[1:]
    rows = []
    for x in grid:
        bound = freedman_bound(x * n_rounds, n_rounds * norm_sq, 2 * T)
        rows.append({"x": float(x), "empirical": float(np.mean(dev >= x)), "freedman": min(1.0, bound)})
    return rows


def conditional_truncated_mean(draws, O, rho, T):
    """``E[Y | rho]`` under enumerated ``(weight, draw)`` pairs."""
    from .frames import born_probabilities

    total = 0.0
    for w, draw in draws:
        p = born_probabilities(draw, rho)
        total += w * float(p @ truncate(shadow_values(O, draw), T))
    return total


__all__ = [
    "single_shot_value",
    "single_shot_values",
    "truncate",
    "truncated_mean",
    "plain_mean",
    "median_of_means",
    "threshold",
    "plan_samples",
    "plan_for_protocol",
    "shadow_norm_sq",
    "v_H",
    "freedman_bound",
    "tail_curve",
    "EstimationPlan",
    "EstimateResult",
]
