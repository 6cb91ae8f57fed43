"""Experiment orchestration: configs, seeded trial fan-out and coverage reports.

A config is a JSON object with a ``schema_version`` field. Each trial ``i``
draws its randomness from the streams ``(seed, i, purpose)``, so a trial's
result does not depend on which worker ran it or in what order. Rows are
always written in trial order.
"""
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import jsonschema
import numpy as np

from .acquisition import RngStreamSpec, load_record, load_trajectory, run_acquisition, save_record, save_trajectory
from .dense import as_density_matrix, decode_matrix, ket_to_dm, maximally_mixed, product_state
from .errors import ConfigInvalid, ShadowsError
from .estimators import median_of_means, plain_mean, plan_for_protocol, truncated_mean
from .frames import CliffordProtocol, PauliProtocol
from .pauli import observable_qubits, parse_observable
from .process import (
    DriftChannelSource,
    FixedChannelSource,
    ParityChannelSource,
    channel_from_json,
    pauli6_process_protocol,
    rz_channel,
    run_process_acquisition,
)
from .sources import (
    GhzUnravelSource,
    IidSource,
    LastOutcomeEchoSource,
    ParityFlipSource,
    WorstCaseSignSource,
    linear_drift_source,
)

SCHEMA_VERSION = 1
CSV_COLUMNS = ["trial", "observable_id", "N", "T", "o_hat", "o_bar", "abs_err", "failed", "truncation_hits", "seed"]
COMPARE_COLUMNS = [
    "trial",
    "observable_id",
    "N",
    "T",
    "o_bar",
    "truncated",
    "plain",
    "mom",
    "truncated_err",
    "plain_err",
    "mom_err",
    "seed",
]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "protocol", "observables", "epsilon", "delta"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "protocol": {"enum": ["pauli", "clifford", "process"]},
        "n": {"type": "integer", "minimum": 1, "maximum": 6},
        "d": {"enum": [2, 4]},
        "source": {"type": "object", "required": ["type"]},
        "channel": {"type": "object", "required": ["type"]},
        "observables": {"type": "array", "minItems": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "n_rounds": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "record_out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "mom_batches": {"type": "integer", "minimum": 1},
    },
}


# --- descriptors ------------------------------------------------------------------------


def decode_state(data, n=None):
    """State from its descriptor: ``"mixed"``, a product label like ``"0+"``,
    ``{"matrix": ...}``, ``{"vector": [[re, im], ...]}`` or a nested list."""
    if isinstance(data, str):
        if data == "mixed":
            if n is None:
                raise ValueError("'mixed' needs a qubit count")
            return maximally_mixed(2**n)
        return product_state(data)
    if isinstance(data, dict) and "matrix" in data:
        return as_density_matrix(decode_matrix(data["matrix"]))
    if isinstance(data, dict) and "vector" in data:
        v = np.asarray(data["vector"], dtype=float)
        return ket_to_dm(v[:, 0] + 1j * v[:, 1])
    return as_density_matrix(np.asarray(data))


def _param(params, key, where):
    if key not in params:
        raise ConfigInvalid({f"{where}.params.{key}": "required parameter missing"})
    return params[key]


def build_state_source(desc, n, n_rounds):
    """State source from ``{"type": ..., "params": {...}}``."""
    kind = desc["type"]
    p = desc.get("params", {})

    def state(key):
        return decode_state(_param(p, key, "source"), n)

    if kind == "iid":
        return IidSource(state("state"))
    if kind == "linear_drift":
        return linear_drift_source(state("start"), state("end"), int(p.get("n_rounds", n_rounds)))
    if kind == "parity_flip":
        return ParityFlipSource(state("rho_a"), state("rho_b"))
    if kind == "last_outcome_echo":
        return LastOutcomeEchoSource(state("rho_0"), state("rho_1"))
    if kind == "worst_case_sign":
        obs = parse_observable(_param(p, "observable", "source"))
        return WorstCaseSignSource(obs, state("rho_plus"), state("rho_minus"))
    if kind == "ghz_unravel":
        return GhzUnravelSource(int(_param(p, "n", "source")))
    raise ConfigInvalid({"source.type": f"unknown source type {kind!r}"})


def build_channel_source(desc, n_rounds):
    """Channel source from ``{"type": fixed | rz_drift | parity_switch, "params": {...}}``."""
    kind = desc["type"]
    p = desc.get("params", {})
    if kind == "fixed":
        return FixedChannelSource(channel_from_json(_param(p, "channel", "channel")))
    if kind == "parity_switch":
        even = channel_from_json(_param(p, "even", "channel"))
        return ParityChannelSource(even, channel_from_json(_param(p, "odd", "channel")))
    if kind == "rz_drift":
        a = float(_param(p, "theta_start", "channel"))
        b = float(_param(p, "theta_end", "channel"))
        m = int(p.get("n_rounds", n_rounds))

        def fn(t):
            s = min(t, m) / m
            return rz_channel((1 - s) * a + s * b)

        return DriftChannelSource(fn, 2, {"type": "rz_drift", "params": {"theta_start": a, "theta_end": b, "n_rounds": m}})
    raise ConfigInvalid({"channel.type": f"unknown channel source type {kind!r}"})


def _observable_id(entry, i):
    if isinstance(entry, str):
        return entry
    if isinstance(entry, dict) and "id" in entry:
        return str(entry["id"])
    return f"O{i}"


# --- config ------------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data):
        errors = {}
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        for err in validator.iter_errors(data):
            path = ".".join(str(x) for x in err.absolute_path) or "<root>"
            errors.setdefault(path, err.message)
        if errors:
            raise ConfigInvalid(errors)
        cfg = cls(dict(data))
        cfg._check_semantics()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigInvalid({"<file>": f"cannot read {path}: {exc}"}) from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid({"<file>": f"invalid JSON: {exc}"}) from exc
        return cls.from_dict(data)

    def _check_semantics(self):
        errors = {}
        proto = self.protocol_name
        if proto == "process":
            if "channel" not in self.raw:
                errors["channel"] = "process configs need a channel source"
            if "source" in self.raw:
                errors["source"] = "process configs take 'channel', not 'source'"
        else:
            if "n" not in self.raw:
                errors["n"] = f"{proto} configs need a qubit count"
            if "source" not in self.raw:
                errors["source"] = f"{proto} configs need a state source"
        if errors:
            raise ConfigInvalid(errors)
        field_name = "channel" if proto == "process" else "source"
        try:
            src = self.build_source(int(self.raw.get("n_rounds", 1)))
        except ConfigInvalid as exc:
            errors.update(exc.errors)
        except (ShadowsError, ValueError, KeyError, TypeError) as exc:
            errors[field_name] = f"cannot build {field_name}: {exc}"
        else:
            if src.dim is not None and src.dim != self.d:
                errors[field_name] = f"{field_name} dimension {src.dim} does not match protocol dimension {self.d}"
        nq = self.observable_qubits_expected
        for i, entry in enumerate(self.raw["observables"]):
            try:
                O = parse_observable(entry)
                q = observable_qubits(O)
            except (ShadowsError, ValueError, KeyError, TypeError) as exc:
                errors[f"observables.{i}"] = f"cannot parse observable: {exc}"
                continue
            if q != nq:
                errors[f"observables.{i}"] = f"acts on {q} qubits, protocol needs {nq}"
        if errors:
            raise ConfigInvalid(errors)

    # accessors
    @property
    def protocol_name(self):
        return self.raw["protocol"]

    @property
    def n(self):
        if self.protocol_name == "process":
            return int(round(math.log2(self.d)))
        return int(self.raw["n"])

    @property
    def d(self):
        return int(self.raw.get("d", 2)) if self.protocol_name == "process" else 2 ** int(self.raw["n"])

    @property
    def observable_qubits_expected(self):
        return 2 * self.n if self.protocol_name == "process" else self.n

    @property
    def epsilon(self):
        return float(self.raw["epsilon"])

    @property
    def delta(self):
        return float(self.raw["delta"])

    @property
    def trials(self):
        return int(self.raw.get("trials", 1))

    @property
    def seed(self):
        return int(self.raw.get("seed", 0))

    @property
    def workers(self):
        return int(self.raw.get("workers", 1))

    @property
    def out_dir(self):
        return self.raw.get("out_dir")

    @property
    def observable_ids(self):
        return [_observable_id(e, i) for i, e in enumerate(self.raw["observables"])]

    @property
    def observables(self):
        return [parse_observable(e) for e in self.raw["observables"]]

    def with_overrides(self, **kw):
        raw = dict(self.raw)
        raw.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(raw)

    def key(self):
        return json.dumps(self.raw, sort_keys=True)

    def build_protocol(self):
        return _protocol_for(self.protocol_name, self.n, self.d)

    def build_source(self, n_rounds):
        if self.protocol_name == "process":
            return build_channel_source(self.raw["channel"], n_rounds)
        return build_state_source(self.raw["source"], self.n, n_rounds)


@lru_cache(maxsize=8)
def _protocol_for(name, n, d):
    if name == "pauli":
        return PauliProtocol(n)
    if name == "clifford":
        return CliffordProtocol(n)
    return pauli6_process_protocol(d)


def as_config(config):
    if isinstance(config, ExperimentConfig):
        return config
    if isinstance(config, dict):
        return ExperimentConfig.from_dict(config)
    return ExperimentConfig.load(config)


# --- commands ----------------------------------------------------------------------------


def cmd_plan(config):
    """Plan ``N`` and per-observable thresholds; ``n_rounds`` in the config overrides ``N``."""
    cfg = as_config(config)
    plan = plan_for_protocol(cfg.build_protocol(), cfg.observables, cfg.epsilon, cfg.delta)
    if "n_rounds" in cfg.raw:
        plan = replace(plan, n_rounds=int(cfg.raw["n_rounds"]))
    return plan


def plan_report(config, plan):
    cfg = as_config(config)
    out = plan.to_json()
    for oid, entry in zip(cfg.observable_ids, out["observables"]):
        entry["id"] = oid
    return out


def _acquire_trial(cfg, plan, trial):
    stream = RngStreamSpec(cfg.seed, trial)
    source = cfg.build_source(plan.n_rounds)
    protocol = cfg.build_protocol()
    if cfg.protocol_name == "process":
        return run_process_acquisition(source, protocol, plan.n_rounds, stream)
    return run_acquisition(source, protocol, plan.n_rounds, stream)


def cmd_acquire(config, trial=0, record_out=None, trajectory_out=None):
    """One seeded acquisition at the planned ``N``; optionally persisted."""
    cfg = as_config(config)
    plan = cmd_plan(cfg)
    record, traj = _acquire_trial(cfg, plan, trial)
    record_out = record_out or cfg.raw.get("record_out")
    if record_out:
        save_record(record, record_out)
    if trajectory_out:
        save_trajectory(traj, trajectory_out)
    return record, traj


def cmd_estimate(record, observables, epsilon=None, delta=None, threshold=None, trajectory=None):
    """Estimate observables from a record; ``T`` from ``threshold`` or else planned from ``(epsilon, delta)``."""
    if isinstance(record, str | Path):
        record = load_record(record)
    if isinstance(trajectory, str | Path):
        trajectory = load_trajectory(trajectory)
    obs = [parse_observable(o) for o in observables]
    if threshold is not None:
        thresholds = [float(threshold)] * len(obs)
    else:
        if epsilon is None or delta is None:
            raise ConfigInvalid({"threshold": "give a threshold or both epsilon and delta"})
        thresholds = plan_for_protocol(record.protocol, obs, epsilon, delta).thresholds
    return [truncated_mean(record, O, T, trajectory=trajectory) for O, T in zip(obs, thresholds)]


def _trial_rows(args):
    cfg, plan, trial = args
    record, traj = _acquire_trial(cfg, plan, trial)
    rows = []
    for oid, O, T in zip(cfg.observable_ids, cfg.observables, plan.thresholds):
        r = truncated_mean(record, O, T, trajectory=traj)
        rows.append(
            {
                "trial": trial,
                "observable_id": oid,
                "N": plan.n_rounds,
                "T": r.threshold,
                "o_hat": r.o_hat,
                "o_bar": r.o_bar,
                "abs_err": r.error,
                "failed": int(r.error > cfg.epsilon),
                "truncation_hits": r.truncation_hits,
                "seed": cfg.seed,
            }
        )
    return rows


def _compare_rows(args):
    cfg, plan, trial, batches = args
    record, traj = _acquire_trial(cfg, plan, trial)
    rows = []
    for oid, O, T in zip(cfg.observable_ids, cfg.observables, plan.thresholds):
        r = truncated_mean(record, O, T, trajectory=traj)
        plain = plain_mean(record, O)
        mom = median_of_means(record, O, min(batches, len(record)))
        rows.append(
            {
                "trial": trial,
                "observable_id": oid,
                "N": plan.n_rounds,
                "T": r.threshold,
                "o_bar": r.o_bar,
                "truncated": r.o_hat,
                "plain": plain,
                "mom": mom,
                "truncated_err": abs(r.o_hat - r.o_bar),
                "plain_err": abs(plain - r.o_bar),
                "mom_err": abs(mom - r.o_bar),
                "seed": cfg.seed,
            }
        )
    return rows


def _fan_out(fn, jobs, workers):
    """Yield job results in submission order."""
    if workers <= 1:
        for job in jobs:
            yield fn(job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, jobs)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _CsvSink:
    """Writes rows as they arrive and flushes, so partial runs leave usable files."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = columns
        self.fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = path.open("w", newline="")
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(columns)

    def write(self, row):
        if self.fh is not None:
            self.writer.writerow([_fmt(row[c]) for c in self.columns])
            self.fh.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


@dataclass
class CoverageReport:
    """Per-trial rows plus per-observable failure statistics."""

    epsilon: float
    delta: float
    rows: list = field(default_factory=list)
    complete: bool = True

    @property
    def summary(self):
        groups = {}
        for row in self.rows:
            groups.setdefault(row["observable_id"], []).append(row)
        out = []
        for oid, rows in groups.items():
            errs = np.array([float(r["abs_err"]) for r in rows])
            failures = int(sum(int(r["failed"]) for r in rows))
            out.append(
                {
                    "observable_id": oid,
                    "N": int(rows[0]["N"]),
                    "T": float(rows[0]["T"]),
                    "trials": len(rows),
                    "failures": failures,
                    "failure_rate": failures / len(rows),
                    "mean_abs_err": float(errs.mean()),
                    "max_abs_err": float(errs.max()),
                }
            )
        return out

    def failure_rate(self, observable_id=None):
        for s in self.summary:
            if observable_id is None or s["observable_id"] == observable_id:
                return s["failure_rate"]
        raise KeyError(observable_id)

    def to_json(self):
        return {"epsilon": self.epsilon, "delta": self.delta, "complete": self.complete, "observables": self.summary}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path, epsilon, delta):
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            for k in ("trial", "N", "failed", "truncation_hits", "seed"):
                r[k] = int(r[k])
            for k in ("T", "o_hat", "o_bar", "abs_err"):
                r[k] = float(r[k])
        return cls(epsilon, delta, rows)


def _out_paths(cfg, out_dir, csv_name, json_name):
    out_dir = out_dir or cfg.out_dir
    if out_dir is None:
        return None, None
    out_dir = Path(out_dir)
    return out_dir / csv_name, out_dir / json_name


def cmd_experiment(config, out_dir=None, workers=None, trials=None, seed=None):
    """Run seeded trials, compare each estimate with its trajectory average and report coverage.

    Writes ``trials.csv`` and ``summary.json`` into ``out_dir`` (or the
    config's ``out_dir``) when one is given.
    """
    cfg = as_config(config).with_overrides(trials=trials, seed=seed)
    plan = cmd_plan(cfg)
    csv_path, json_path = _out_paths(cfg, out_dir, "trials.csv", "summary.json")
    sink = _CsvSink(csv_path, CSV_COLUMNS)
    report = CoverageReport(cfg.epsilon, cfg.delta, complete=False)
    jobs = [(cfg, plan, i) for i in range(cfg.trials)]
    try:
        for rows in _fan_out(_trial_rows, jobs, workers or cfg.workers):
            for row in rows:
                sink.write(row)
                report.rows.append(row)
        report.complete = True
    finally:
        sink.close()
        if json_path is not None:
            summary = report.to_json()
            summary["plan"] = plan_report(cfg, plan)
            summary["seed"] = cfg.seed
            summary["trials"] = cfg.trials
            json_path.write_text(json.dumps(summary, indent=2) + "\n")
    return report


def default_mom_batches(delta):
    """``ceil(8 ln(1/delta))``, the usual batch count for confidence ``1 - delta``."""
    return math.ceil(8 * math.log(1 / delta))


def cmd_compare(config, out_dir=None, workers=None, trials=None, seed=None):
    """Feed the same records to the truncated, plain and median-of-means estimators.

    Returns ``(rows, summary)``; ``summary`` holds error quantiles and
    failure rates per observable and estimator.
    """
    cfg = as_config(config).with_overrides(trials=trials, seed=seed)
    plan = cmd_plan(cfg)
    batches = int(cfg.raw.get("mom_batches", default_mom_batches(cfg.delta)))
    csv_path, json_path = _out_paths(cfg, out_dir, "compare.csv", "compare_summary.json")
    sink = _CsvSink(csv_path, COMPARE_COLUMNS)
    all_rows = []
    jobs = [(cfg, plan, i, batches) for i in range(cfg.trials)]
    try:
        for rows in _fan_out(_compare_rows, jobs, workers or cfg.workers):
            for row in rows:
                sink.write(row)
                all_rows.append(row)
    finally:
        sink.close()
    summary = {"epsilon": cfg.epsilon, "delta": cfg.delta, "mom_batches": batches, "observables": []}
    for oid in cfg.observable_ids:
        rows = [r for r in all_rows if r["observable_id"] == oid]
        entry = {"observable_id": oid, "N": plan.n_rounds, "trials": len(rows)}
        for est in ("truncated", "plain", "mom"):
            errs = np.array([r[f"{est}_err"] for r in rows])
            entry[est] = {
                "median": float(np.quantile(errs, 0.5)),
                "q90": float(np.quantile(errs, 0.9)),
                "max": float(errs.max()),
                "failure_rate": float(np.mean(errs > cfg.epsilon)),
            }
        summary["observables"].append(entry)
    if json_path is not None:
        json_path.write_text(json.dumps(summary, indent=2) + "\n")
    return all_rows, summary
