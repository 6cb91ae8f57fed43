"""Shadow process tomography for adaptive channel sequences.

A channel is stored by its Kraus operators and represented by its normalized
Choi state ``(I x Lambda)(|Omega><Omega|)``, with the reference system first.
Each round the apparatus picks input ``sigma_j`` uniformly from an ensemble
averaging to ``1/d``, the channel source fixes ``Lambda_t`` from the history
(never seeing ``j_t``), and the output is measured with an IC POVM.
Outcome pairs ``(j, k)`` are the effects ``(d/L) sigma_j^T x E_k`` of an IC
POVM on the doubled space, so the state-shadow machinery applies to Choi
states unchanged.
"""
from itertools import product

import numpy as np

from .acquisition import MeasurementRecord, _acquire, as_stream
from .dense import as_density_matrix, decode_matrix, encode_matrix, product_state
from .errors import DimensionMismatch, EnsembleNotBalanced, IncompleteKraus, NotInformationallyComplete
from .estimators import plan_samples, truncated_mean
from .frames import Povm, ProtocolDraw, frame_rank, pauli6_povm, shadow_norm_exact
from .pauli import PAULI_MATRICES, observable_to_dense, traceless_decompose
from .sources import Trajectory, history_parity

KRAUS_TOL = 1e-10
ENSEMBLE_TOL = 1e-10


class Channel:
    """CPTP map in Kraus form."""

    def __init__(self, kraus, name=None, params=None, tol=KRAUS_TOL):
        kraus = np.array(kraus, dtype=complex)
        if kraus.ndim == 2:
            kraus = kraus[None]
        total = np.einsum("kji,kjl->il", kraus.conj(), kraus)
        if np.abs(total - np.eye(kraus.shape[1])).max() > tol:
            raise IncompleteKraus("Kraus operators do not satisfy sum K^dag K = 1")
        kraus.setflags(write=False)
        self.kraus = kraus
        self.name = name or "kraus"
        self.params = params or {}
        self._choi = None

    @property
    def d(self):
        return self.kraus.shape[1]

    def apply(self, rho):
        return np.einsum("kij,jl,kml->im", self.kraus, rho, self.kraus.conj())

    def choi(self):
        if self._choi is None:
            d = self.d
            omega = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
            vecs = np.array([np.kron(np.eye(d), k) @ omega for k in self.kraus])
            c = np.einsum("ki,kj->ij", vecs, vecs.conj())
            self._choi = as_density_matrix(c)
        return self._choi

    def to_json(self):
        if self.name == "kraus":
            return {"type": "kraus", "ops": [encode_matrix(k) for k in self.kraus]}
        return {"type": self.name, **self.params}


def choi(channel):
    return channel.choi()


def identity_channel(d=2):
    return Channel([np.eye(d)], name="identity", params={"d": d})


def depolarizing_channel(p, d=2):
    """``rho -> (1 - p) rho + p tr(rho) 1/d`` on a qubit; ``p = 1`` is fully depolarizing."""
    if d != 2:
        raise ValueError("depolarizing Kraus form is built for qubits only")
    ops = [np.sqrt(1 - 3 * p / 4) * PAULI_MATRICES["I"]]
    ops += [np.sqrt(p / 4) * PAULI_MATRICES[c] for c in "XYZ"]
    return Channel(ops, name="depolarizing", params={"p": p})


def bitflip_channel(p):
    return Channel(
        [np.sqrt(1 - p) * PAULI_MATRICES["I"], np.sqrt(p) * PAULI_MATRICES["X"]], name="bitflip", params={"p": p}
    )


def rz_channel(theta):
    u = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    return Channel([u], name="rz", params={"theta": theta})


def unitary_channel(u):
    return Channel([np.asarray(u, dtype=complex)])


def random_channel(d, rng, n_kraus=None):
    """Random channel from a Haar-like isometry ``d -> d * n_kraus`` split into Kraus blocks."""
    r = n_kraus or d * d
    g = rng.normal(size=(d * r, d)) + 1j * rng.normal(size=(d * r, d))
    q, _ = np.linalg.qr(g)
    return Channel(q.reshape(r, d, d))


def channel_from_json(data):
    kind = data["type"]
    if kind == "identity":
        return identity_channel(int(data.get("d", 2)))
    if kind == "depolarizing":
        return depolarizing_channel(float(data["p"]))
    if kind == "bitflip":
        return bitflip_channel(float(data["p"]))
    if kind == "rz":
        return rz_channel(float(data["theta"]))
    if kind == "kraus":
        return Channel([decode_matrix(k) for k in data["ops"]])
    raise ValueError(f"unknown channel type {kind!r}")


class InputEnsemble:
    """Uniformly weighted input states whose average is ``1/d``."""

    def __init__(self, states, tol=ENSEMBLE_TOL):
        states = [as_density_matrix(s) for s in states]
        if not states:
            raise EnsembleNotBalanced("ensemble is empty")
        d = states[0].shape[0]
        avg = sum(states) / len(states)
        if np.abs(avg - np.eye(d) / d).max() > tol:
            raise EnsembleNotBalanced("ensemble average is not the maximally mixed state")
        self.states = np.array(states)
        self.states.setflags(write=False)

    @property
    def d(self):
        return self.states.shape[1]

    def __len__(self):
        return len(self.states)

    def to_json(self):
        return [encode_matrix(s) for s in self.states]

    @classmethod
    def from_json(cls, data):
        return cls([decode_matrix(s) for s in data])


def pauli6_ensemble(n=1):
    """Tensor products of the six single-qubit Pauli eigenstates, ``6^n`` states."""
    return InputEnsemble([product_state("".join(c)) for c in product("+-rl01", repeat=n)])


def process_povm(ensemble, povm):
    """Bipartite POVM ``{(d/L) sigma_j^T x E_k}``, index ``j * M + k``."""
    if povm.d != ensemble.d:
        raise DimensionMismatch("ensemble and POVM act on different dimensions")
    d, L = ensemble.d, len(ensemble)
    effects = np.einsum("jab,kcd->jkacbd", ensemble.states.transpose(0, 2, 1), povm.effects)
    effects = (d / L) * effects.reshape(L * len(povm), d * d, d * d)
    out = Povm(effects, name="process")
    rank = frame_rank(out)
    if rank < (d * d) ** 2:
        raise NotInformationallyComplete(f"bipartite frame rank {rank} < {(d * d) ** 2}")
    return out


class ProcessProtocol:
    """Random input from ``ensemble``, channel, then ``povm`` on the output."""

    name = "process"

    def __init__(self, ensemble, povm):
        self.ensemble = ensemble
        self.output_povm = povm
        self.bipartite = process_povm(ensemble, povm)
        self.dim = ensemble.d
        self._draws = [ProtocolDraw("process", index=j, family=self) for j in range(len(ensemble))]

    def sample_draws(self, n_rounds, rng):
        return [self._draws[j] for j in rng.integers(0, len(self.ensemble), size=n_rounds)]

    def enumerate_draws(self):
        w = 1.0 / len(self.ensemble)
        return [(w, draw) for draw in self._draws]

    def povm(self):
        return self.bipartite

    def n_outcomes(self, draw):
        return len(self.output_povm)

    def draw_effects(self, draw):
        """Effects ``d sigma_j^T x E_k`` on the Choi space, conditional on input ``j``."""
        L = len(self.ensemble)
        m = len(self.output_povm)
        return L * self.bipartite.effects[draw.index * m : (draw.index + 1) * m]

    def draw_shadows(self, draw):
        m = len(self.output_povm)
        return self.bipartite.dual[draw.index * m : (draw.index + 1) * m]

    def born(self, draw, channel):
        out = channel.apply(self.ensemble.states[draw.index])
        return self.output_povm.probabilities(out)

    def to_json(self):
        return {"name": self.name, "ensemble": self.ensemble.to_json(), "povm": self.output_povm.to_json()}

    @classmethod
    def from_json(cls, data):
        return cls(InputEnsemble.from_json(data["ensemble"]), Povm.from_json(data["povm"]))

    def encode_round(self, draw, k):
        return {"kind": "process"}, [draw.index, int(k)]

    def decode_round(self, d_json, k_json):
        j, k = k_json
        return self._draws[int(j)], int(k)


def pauli6_process_protocol(d=2):
    n = int(round(np.log2(d)))
    if 2**n != d:
        raise ValueError(f"dimension {d} is not a power of two")
    return ProcessProtocol(pauli6_ensemble(n), pauli6_povm(n))


# --- channel sources ------------------------------------------------------------------------


class ChannelSource:
    dim = None
    descriptor = None

    def next_channel(self, history):
        raise NotImplementedError


class FixedChannelSource(ChannelSource):
    def __init__(self, channel):
        self.channel = channel
        self.dim = channel.d
        self.descriptor = {"type": "fixed", "params": {"channel": channel.to_json()}}

    def next_channel(self, history):
        return self.channel


class DriftChannelSource(ChannelSource):
    """Channel depends on the round index only, ``Lambda_t = fn(t)``."""

    def __init__(self, fn, dim=2, descriptor=None):
        self.fn = fn
        self.dim = dim
        self.descriptor = descriptor
        self._cache = {}

    def next_channel(self, history):
        t = len(history) + 1
        ch = self._cache.get(t)
        if ch is None:
            ch = self._cache[t] = self.fn(t)
        return ch


class ParityChannelSource(ChannelSource):
    """``even`` while the parity of past outcome sign bits is even, else ``odd``."""

    def __init__(self, even, odd):
        self.even = even
        self.odd = odd
        self.dim = even.d
        self.descriptor = {"type": "parity_switch", "params": {"even": even.to_json(), "odd": odd.to_json()}}

    def next_channel(self, history):
        return self.even if history_parity(history, (self, "parity")) == 0 else self.odd


def rz_drift_source(theta_start, theta_end, n_rounds):
    def fn(t):
        s = min(t, n_rounds) / n_rounds
        return rz_channel((1 - s) * theta_start + s * theta_end)

    desc = {"type": "rz_drift", "params": {"theta_start": theta_start, "theta_end": theta_end, "n_rounds": n_rounds}}
    return DriftChannelSource(fn, 2, desc)


def run_process_acquisition(source, protocol, n_rounds, rng, metadata=None):
    """Adaptive process acquisition; returns ``(record, Choi-state trajectory)``."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    if source.dim is not None and source.dim != protocol.dim:
        raise DimensionMismatch(f"channel dimension {source.dim} does not match protocol dimension {protocol.dim}")

    def validate(channel):
        if channel.d != protocol.dim:
            raise DimensionMismatch(f"channel dimension {channel.d} does not match {protocol.dim}")

    draws, outcomes, channels, stream = _acquire(source.next_channel, protocol, n_rounds, rng, validate)
    meta = {
        "protocol": protocol.name,
        "dim": protocol.dim,
        "n_rounds": n_rounds,
        "seed": stream.master_seed,
        "trial": stream.trial,
        "source": source.descriptor,
    }
    meta.update(metadata or {})
    return MeasurementRecord(protocol, draws, outcomes, meta), Trajectory([c.choi() for c in channels])


def process_shadow_norm(protocol, O):
    O0, _ = traceless_decompose(observable_to_dense(O))
    return shadow_norm_exact(protocol.bipartite, O0)


def plan_process(protocol, O, epsilon, delta):
    """Single-observable plan with the exact bipartite shadow norm."""
    return plan_samples(epsilon, delta, [process_shadow_norm(protocol, O)], norm_sources=["exact"])


def estimate_process(record, O, plan, trajectory=None):
    return truncated_mean(record, O, plan.thresholds[0], trajectory=trajectory)


__all__ = [
    "Channel",
    "choi",
    "identity_channel",
    "depolarizing_channel",
    "bitflip_channel",
    "rz_channel",
    "unitary_channel",
    "random_channel",
    "channel_from_json",
    "InputEnsemble",
    "pauli6_ensemble",
    "process_povm",
    "ProcessProtocol",
    "pauli6_process_protocol",
    "ChannelSource",
    "FixedChannelSource",
    "DriftChannelSource",
    "ParityChannelSource",
    "rz_drift_source",
    "run_process_acquisition",
    "process_shadow_norm",
    "plan_process",
    "estimate_process",
    "as_stream",
]
