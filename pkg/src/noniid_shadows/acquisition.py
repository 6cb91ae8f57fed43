"""Sequential data acquisition and measurement-record persistence.

Each round the apparatus picks a draw, the source prepares a state from the
history so far, and an outcome is sampled by Born's rule. Draws and outcomes
use separate RNG streams, so the protocol randomness is independent of both
Born sampling and the source.
"""
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dense import check_density_matrix, encode_matrix
from .errors import (
    DimensionMismatch,
    NonNormalizedBornDistribution,
    RecordIOError,
    SchemaVersionMismatch,
)
from .frames import born_probabilities, protocol_from_json
from .pauli import PauliString, WeightedPauliSum, observable_to_json
from .sources import History, Trajectory

RECORD_SCHEMA = "noniid-shadows/record"
RECORD_VERSION = 1
BORN_TOL = 1e-8


@dataclass(frozen=True)
class RngStreamSpec:
    """Identifies one reproducible random stream: ``(master seed, trial, purpose)``."""

    master_seed: int
    trial: int = 0
    purpose: str = "main"

    def with_purpose(self, purpose):
        return RngStreamSpec(self.master_seed, self.trial, purpose)

    def generator(self, purpose=None):
        purpose = self.purpose if purpose is None else purpose
        tag = zlib.crc32(purpose.encode())
        seq = np.random.SeedSequence(entropy=int(self.master_seed) & (2**64 - 1), spawn_key=(int(self.trial), tag))
        return np.random.Generator(np.random.PCG64(seq))


def as_stream(rng):
    if isinstance(rng, RngStreamSpec):
        return rng
    return RngStreamSpec(int(rng))


@dataclass
class MeasurementRecord:
    """Ordered rounds ``(t, draw, outcome)`` plus run metadata."""

    protocol: object
    draws: list
    outcomes: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.draws) != len(self.outcomes):
            raise ValueError("draws and outcomes must have equal length")

    def __len__(self):
        return len(self.outcomes)

    @property
    def rounds(self):
        return [(t + 1, d, k) for t, (d, k) in enumerate(zip(self.draws, self.outcomes))]

    def history(self, t=None):
        t = len(self) if t is None else t
        return History(zip(self.draws[:t], self.outcomes[:t]))

    def __eq__(self, other):
        if not isinstance(other, MeasurementRecord):
            return NotImplemented
        return (
            self.protocol.to_json() == other.protocol.to_json()
            and list(self.outcomes) == list(other.outcomes)
            and all(a == b for a, b in zip(self.draws, other.draws))
            and _jsonable(self.metadata) == _jsonable(other.metadata)
        )


def _acquire(next_prepared, protocol, n_rounds, rng, validate):
    stream = as_stream(rng)
    draws = protocol.sample_draws(n_rounds, stream.generator("draw"))
    uniforms = stream.generator("outcome").random(n_rounds)
    history = History()
    prepared_seq = []
    outcomes = []
    cache = {}
    for t in range(n_rounds):
        prepared = next_prepared(history)
        draw = draws[t]
        key = (id(prepared), draw.key)
        cum = cache.get(key)
        if cum is None:
            validate(prepared)
            p = born_probabilities(draw, prepared)
            total = p.sum()
            if abs(total - 1) > BORN_TOL or p.min() < -BORN_TOL:
                raise NonNormalizedBornDistribution(f"round {t + 1}: Born probabilities sum to {total}")
            cum = np.cumsum(np.clip(p, 0, None))
            cache[key] = cum
        k = int(np.searchsorted(cum, uniforms[t] * cum[-1], side="right"))
        k = min(k, len(cum) - 1)
        history.append(draw, k)
        prepared_seq.append(prepared)
        outcomes.append(k)
    return draws, outcomes, prepared_seq, stream


def run_acquisition(source, protocol, n_rounds, rng, metadata=None):
    """Run ``n_rounds`` adaptive rounds; return ``(record, trajectory)``.

    ``rng`` is an :class:`RngStreamSpec` or an integer master seed.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    if source.dim is not None and source.dim != protocol.dim:
        raise DimensionMismatch(f"source dimension {source.dim} does not match protocol dimension {protocol.dim}")

    def validate(rho):
        if np.shape(rho) != (protocol.dim, protocol.dim):
            raise DimensionMismatch(f"state shape {np.shape(rho)} does not match protocol dimension {protocol.dim}")
        check_density_matrix(rho)

    draws, outcomes, states, stream = _acquire(source.next_state, protocol, n_rounds, rng, validate)
    meta = {
        "protocol": protocol.name,
        "dim": protocol.dim,
        "n_rounds": n_rounds,
        "seed": stream.master_seed,
        "trial": stream.trial,
        "source": getattr(source, "descriptor", None),
    }
    meta.update(metadata or {})
    return MeasurementRecord(protocol, draws, outcomes, meta), Trajectory(states)


# --- persistence --------------------------------------------------------------------


def _jsonable(obj):
    """Convert descriptors holding arrays and Pauli objects into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, PauliString | WeightedPauliSum):
        return observable_to_json(obj)
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2 and np.iscomplexobj(obj):
            return {"matrix": encode_matrix(obj)}
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def save_record(record, path):
    path = Path(path)
    header = {
        "schema": RECORD_SCHEMA,
        "version": RECORD_VERSION,
        "protocol": record.protocol.to_json(),
        "n_rounds": len(record),
        "metadata": _jsonable(record.metadata),
    }
    try:
        with path.open("w") as fh:
            fh.write(json.dumps(header) + "\n")
            for t, draw, k in record.rounds:
                d_json, k_json = _encode_round(record.protocol, draw, k)
                fh.write(json.dumps({"t": t, "draw": d_json, "k": k_json}) + "\n")
    except OSError as exc:
        raise RecordIOError(f"cannot write record to {path}: {exc}") from exc


def _encode_round(protocol, draw, k):
    if hasattr(protocol, "encode_round"):
        return protocol.encode_round(draw, k)
    return protocol.encode_draw(draw), int(k)


def _decode_round(protocol, d_json, k_json):
    if hasattr(protocol, "decode_round"):
        return protocol.decode_round(d_json, k_json)
    return protocol.decode_draw(d_json), int(k_json)


def load_record(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise RecordIOError(f"cannot read record {path}: {exc}") from exc
    if not lines:
        raise RecordIOError(f"record {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise RecordIOError(f"record {path} has a corrupt header") from exc
    if header.get("schema") != RECORD_SCHEMA or header.get("version") != RECORD_VERSION:
        raise SchemaVersionMismatch(
            f"expected {RECORD_SCHEMA} v{RECORD_VERSION}, got {header.get('schema')} v{header.get('version')}"
        )
    protocol = protocol_from_json(header["protocol"])
    body = lines[1:]
    if len(body) != header["n_rounds"]:
        raise RecordIOError(f"record {path} declares {header['n_rounds']} rounds but holds {len(body)}")
    draws, outcomes = [], []
    for i, line in enumerate(body):
        try:
            row = json.loads(line)
            if row["t"] != i + 1:
                raise RecordIOError(f"round index {row['t']} out of order at line {i + 2}")
            draw, k = _decode_round(protocol, row["draw"], row["k"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise RecordIOError(f"corrupt round at line {i + 2} of {path}") from exc
        if not 0 <= k < draw.n_outcomes:
            raise RecordIOError(f"outcome {k} out of range at line {i + 2}")
        draws.append(draw)
        outcomes.append(k)
    return MeasurementRecord(protocol, draws, outcomes, header.get("metadata", {}))


def save_trajectory(traj, path):
    """Ground-truth states, kept apart from the experimental record."""
    np.save(Path(path), np.array(traj.states), allow_pickle=False)


def load_trajectory(path):
    arr = np.load(Path(path), allow_pickle=False)
    return Trajectory([a for a in arr])

