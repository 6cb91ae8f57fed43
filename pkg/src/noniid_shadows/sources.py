"""History-dependent state sources.

A source maps the observable history of earlier rounds (draws and outcomes,
never the current round's draw) to the state presented in the next round.
Sources hold only immutable parameters, so ``next_state`` is a pure function
of the history it is given.

:meth:`History.fold` lets a source keep a running summary of the history
without rescanning it every round. The accumulated value depends only on the
rounds seen, so purity is preserved.
"""
from dataclasses import dataclass

import numpy as np

from .dense import as_density_matrix, expectation, ghz_vector, partial_trace_keep
from .errors import EmptyTrajectory, InvalidState, UnknownRule
from .frames import draw_effects, single_shot_value
from .pauli import observable_to_dense


class History:
    """Append-only list of ``(draw, outcome)`` pairs from completed rounds."""

    def __init__(self, rounds=()):
        self._draws = []
        self._outcomes = []
        self._folds = {}
        for draw, outcome in rounds:
            self.append(draw, outcome)

    def append(self, draw, outcome):
        self._draws.append(draw)
        self._outcomes.append(outcome)

    def __len__(self):
        return len(self._outcomes)

    def __getitem__(self, i):
        return self._draws[i], self._outcomes[i]

    def __iter__(self):
        return zip(self._draws, self._outcomes)

    @property
    def draws(self):
        return tuple(self._draws)

    @property
    def outcomes(self):
        return tuple(self._outcomes)

    def prefix(self, t):
        return History(zip(self._draws[:t], self._outcomes[:t]))

    def fold(self, key, step, initial):
        """Left fold of ``step(acc, draw, outcome)`` over all rounds, memoised under ``key``."""
        count, acc = self._folds.get(key, (0, initial))
        for i in range(count, len(self._outcomes)):
            acc = step(acc, self._draws[i], self._outcomes[i])
        self._folds[key] = (len(self._outcomes), acc)
        return acc


def outcome_bit(draw, outcome):
    """Parity bit of one round's outcome.

    Pauli and Clifford draws use the parity of all measured bits. Fixed and
    process POVMs use ``k mod 2``, which is the eigenvalue sign for the
    built-in Pauli-6 effect ordering.
    """
    if draw.kind in ("pauli", "clifford"):
        return bin(int(outcome)).count("1") & 1
    return int(outcome) & 1


def history_parity(history, key="parity"):
    return history.fold(key, lambda acc, d, k: acc ^ outcome_bit(d, k), 0)


class StateSource:
    """Base class; subclasses implement :meth:`next_state`."""

    dim = None
    descriptor = None

    def next_state(self, history):
        raise NotImplementedError

    def __call__(self, history):
        return self.next_state(history)


class IidSource(StateSource):
    def __init__(self, rho):
        self.rho = as_density_matrix(rho)
        self.dim = self.rho.shape[0]
        self.descriptor = {"type": "iid", "params": {"state": self.rho}}

    def next_state(self, history):
        return self.rho


class DriftSource(StateSource):
    """State depends on the round index only: ``rho_t = trajectory(t)``, ``t = 1, 2, ...``."""

    def __init__(self, trajectory, dim=None, descriptor=None):
        self.trajectory = trajectory
        self.dim = dim if dim is not None else np.asarray(trajectory(1)).shape[0]
        self.descriptor = descriptor
        self._cache = {}

    def next_state(self, history):
        t = len(history) + 1
        rho = self._cache.get(t)
        if rho is None:
            rho = self._cache[t] = as_density_matrix(self.trajectory(t))
        return rho


class FunctionSource(StateSource):
    """Wraps a user-supplied pure function of the history (not serialisable)."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.dim = dim

    def next_state(self, history):
        return as_density_matrix(self.fn(history))


class ParityFlipSource(StateSource):
    def __init__(self, rho_a, rho_b):
        self.rho_a = as_density_matrix(rho_a)
        self.rho_b = as_density_matrix(rho_b)
        self.dim = self.rho_a.shape[0]
        self.descriptor = {"type": "parity_flip", "params": {"rho_a": self.rho_a, "rho_b": self.rho_b}}

    def next_state(self, history):
        return self.rho_a if history_parity(history, (self, "parity")) == 0 else self.rho_b


class LastOutcomeEchoSource(StateSource):
    def __init__(self, rho_0, rho_1):
        self.rho_0 = as_density_matrix(rho_0)
        self.rho_1 = as_density_matrix(rho_1)
        self.dim = self.rho_0.shape[0]
        self.descriptor = {"type": "last_outcome_echo", "params": {"rho_0": self.rho_0, "rho_1": self.rho_1}}

    def next_state(self, history):
        if len(history) == 0:
            return self.rho_0
        draw, k = history[len(history) - 1]
        return self.rho_1 if outcome_bit(draw, k) else self.rho_0


class WorstCaseSignSource(StateSource):
    """Prepares the state whose expectation opposes the running single-shot mean.

    A positive running mean of ``tr(O rho_hat)`` over the history selects
    ``rho_minus``; a zero or negative mean (including the empty history)
    selects ``rho_plus``.
    """

    def __init__(self, observable, rho_plus, rho_minus):
        self.observable = observable
        self.rho_plus = as_density_matrix(rho_plus)
        self.rho_minus = as_density_matrix(rho_minus)
        self.dim = self.rho_plus.shape[0]
        self.descriptor = {
            "type": "worst_case_sign",
            "params": {"observable": observable, "rho_plus": self.rho_plus, "rho_minus": self.rho_minus},
        }

    def running_sum(self, history):
        obs = self.observable
        return history.fold((self, "sum"), lambda acc, d, k: acc + single_shot_value(obs, d, k), 0.0)

    def next_state(self, history):
        return self.rho_minus if self.running_sum(history) > 0 else self.rho_plus


class GhzUnravelSource(StateSource):
    """Virtual sequential reading of one GHZ shot measured qubit by qubit.

    Every ``n`` rounds form one shot of the ``n``-qubit GHZ state. Round ``j``
    of a shot returns the exact reduced state of qubit ``j`` conditioned
    (Lüders rule) on the draws and outcomes of qubits ``0 .. j-1`` of the same
    shot. Qubits are visited in ascending order.
    """

    def __init__(self, n):
        if n < 1:
            raise ValueError("need at least one subsystem")
        self.n = n
        self.dim = 2
        self.descriptor = {"type": "ghz_unravel", "params": {"n": n}}
        self._psi = ghz_vector(n)
        self._cache = {}

    def conditional_vector(self, shot_rounds):
        psi = self._psi
        n = self.n
        for q, (draw, k) in enumerate(shot_rounds):
            effect = draw_effects(draw)[int(k)]
            lam, vecs = np.linalg.eigh(effect)
            root = (vecs * np.sqrt(np.clip(lam, 0, None))) @ vecs.conj().T
            t = np.moveaxis(psi.reshape([2] * n), q, 0)
            t = np.tensordot(root, t, axes=([1], [0]))
            psi = np.moveaxis(t, 0, q).reshape(-1)
            norm = np.linalg.norm(psi)
            if norm < 1e-12:
                raise InvalidState("history has zero probability under the GHZ state")
            psi = psi / norm
        return psi

    def next_state(self, history):
        t = len(history)
        j = t % self.n
        shot = [history[i] for i in range(t - j, t)]
        key = tuple((d.key, int(k)) for d, k in shot)
        rho = self._cache.get(key)
        if rho is None:
            psi = self.conditional_vector(shot)
            rho = self._cache[key] = as_density_matrix(partial_trace_keep(psi, self.n, j))
        return rho


def iid_source(rho):
    return IidSource(rho)


def drift_source(trajectory, dim=None, descriptor=None):
    return DriftSource(trajectory, dim=dim, descriptor=descriptor)


def linear_drift_source(start, end, n_rounds):
    """``rho_t = (t/N) end + (1 - t/N) start`` for ``t = 1..N``."""
    start = as_density_matrix(start)
    end = as_density_matrix(end)
    if n_rounds < 1:
        raise ValueError("n_rounds must be positive")

    def trajectory(t):
        s = min(t, n_rounds) / n_rounds
        return s * end + (1 - s) * start

    descriptor = {"type": "linear_drift", "params": {"start": start, "end": end, "n_rounds": n_rounds}}
    return DriftSource(trajectory, dim=start.shape[0], descriptor=descriptor)


FEEDBACK_RULES = {
    "parity_flip": ParityFlipSource,
    "last_outcome_echo": LastOutcomeEchoSource,
    "worst_case_sign": WorstCaseSignSource,
}


def feedback_source(rule, **params):
    """Built-in adversarial rule by name, e.g. ``feedback_source("parity_flip", rho_a=..., rho_b=...)``."""
    try:
        cls = FEEDBACK_RULES[rule]
    except KeyError:
        raise UnknownRule(f"unknown feedback rule {rule!r}; known: {sorted(FEEDBACK_RULES)}") from None
    return cls(**params)


def ghz_unravel_source(n):
    return GhzUnravelSource(n)


@dataclass
class Trajectory:
    """Realized states ``rho_1 .. rho_N`` of one acquisition run."""

    states: list

    def __len__(self):
        return len(self.states)

    def expectations(self, O):
        """Per-round ``tr(O rho_t)``; repeated state objects are evaluated once.

        A list of observables is applied cyclically, round ``t`` using
        ``O[t % len(O)]`` (one observable per site of a shot).
        """
        if not self.states:
            raise EmptyTrajectory("trajectory has no rounds")
        sites = [observable_to_dense(o) for o in O] if isinstance(O, list) else [observable_to_dense(O)]
        seen = {}
        out = np.empty(len(self.states))
        for t, rho in enumerate(self.states):
            s = t % len(sites)
            v = seen.get((s, id(rho)))
            if v is None:
                v = seen[(s, id(rho))] = expectation(sites[s], rho)
            out[t] = v
        return out


def trajectory_average(traj, O):
    """Time-averaged expectation ``(1/N) sum_t tr(O rho_t)``."""
    return float(np.mean(traj.expectations(O)))
