"""Command-line front end.

Exit codes: 0 success, 1 validation or runtime failure, 2 configuration error.
"""
import argparse
import json
import sys

from .errors import ConfigInvalid, ShadowsError
from .pauli import observable_qubits, parse_observable
from .harness import as_config, cmd_acquire, cmd_compare, cmd_estimate, cmd_experiment, cmd_plan, plan_report
from .validate import SEED, SUITES, all_passed, cmd_validate

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _is_term(x):
    return (isinstance(x, dict) and "coeff" in x) or (
        isinstance(x, list) and len(x) == 2 and isinstance(x[0], int | float) and isinstance(x[1], str)
    )


def _observables(text):
    """Comma-separated Pauli strings, or JSON: one observable or a list of them.

    A JSON list made only of ``[coeff, string]`` / ``{coeff, string}`` terms is
    read as a single weighted Pauli sum.
    """
    text = text.strip()
    if not text.startswith(("[", "{")):
        return [s.strip() for s in text.split(",") if s.strip()]
    data = json.loads(text)
    if isinstance(data, dict) or (data and all(_is_term(x) for x in data)):
        return [data]
    return data


def _load_config(args):
    if not args.config:
        raise ConfigInvalid({"--config": "required for this command"})
    cfg = as_config(args.config)
    overrides = {}
    for key in ("seed", "trials", "epsilon", "delta", "workers"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "observables", None):
        overrides["observables"] = _observables(args.observables)
    return cfg.with_overrides(**overrides) if overrides else cfg


def _print_json(obj):
    print(json.dumps(obj, indent=2))


def _adhoc_config(args):
    """Config for ``plan`` called with flags only; protocol defaults from ``--regime``."""
    missing = {f"--{k}": "required without --config" for k in ("epsilon", "delta", "observables") if getattr(args, k) is None}
    if missing:
        raise ConfigInvalid(missing)
    obs = _observables(args.observables)
    protocol = args.protocol or ("clifford" if args.regime == "clifford" else "pauli")
    try:
        n = observable_qubits(parse_observable(obs[0]))
    except (ShadowsError, ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid({"--observables": str(exc)}) from exc
    raw = {"schema_version": 1, "protocol": protocol, "observables": obs, "epsilon": args.epsilon, "delta": args.delta}
    if protocol == "process":
        raw.update(d=2 ** (n // 2), channel={"type": "fixed", "params": {"channel": {"type": "identity"}}})
    else:
        raw.update(n=n, source={"type": "iid", "params": {"state": "mixed"}})
    return as_config(raw)


def run_plan(args):
    cfg = _load_config(args) if args.config else _adhoc_config(args)
    if args.regime is not None and (args.regime == "clifford") != (cfg.protocol_name == "clifford"):
        raise ConfigInvalid({"--regime": f"regime {args.regime!r} does not match protocol {cfg.protocol_name!r}"})
    _print_json(plan_report(cfg, cmd_plan(cfg)))
    return EXIT_OK


def run_acquire(args):
    cfg = _load_config(args)
    record, _ = cmd_acquire(cfg, trial=args.trial, record_out=args.record_out, trajectory_out=args.trajectory_out)
    _print_json({"n_rounds": len(record), "record": args.record_out or cfg.raw.get("record_out")})
    return EXIT_OK


def run_estimate(args):
    if not args.record_in:
        raise ConfigInvalid({"--record-in": "required for estimate"})
    eps, delta, obs = args.epsilon, args.delta, None
    if args.config:
        cfg = _load_config(args)
        eps, delta, obs = cfg.epsilon, cfg.delta, cfg.raw["observables"]
    if args.observables:
        obs = _observables(args.observables)
    if not obs:
        raise ConfigInvalid({"--observables": "give observables directly or through --config"})
    results = cmd_estimate(
        args.record_in, obs, epsilon=eps, delta=delta, threshold=args.threshold, trajectory=args.trajectory_in
    )
    _print_json([{"observable": o, **r.to_json()} for o, r in zip(obs, results)])
    return EXIT_OK


def run_experiment(args):
    cfg = _load_config(args)
    report = cmd_experiment(cfg, out_dir=args.out_dir)
    _print_json(report.to_json())
    return EXIT_OK


def run_compare(args):
    cfg = _load_config(args)
    _, summary = cmd_compare(cfg, out_dir=args.out_dir)
    _print_json(summary)
    return EXIT_OK


def run_validate(args):
    results = cmd_validate(args.suite or None, seed=SEED if args.seed is None else args.seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.2f}s)")
    return EXIT_OK if all_passed(results) else EXIT_FAILED


def build_parser():
    parser = argparse.ArgumentParser(prog="noniid-shadows", description="Classical shadows under adaptive sources.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--epsilon", type=float, help="accuracy override")
        p.add_argument("--delta", type=float, help="failure probability override")
        p.add_argument("--observables", "--observable", dest="observables", help="comma-separated Pauli strings or a JSON list")

    p = sub.add_parser("plan", help="print N and thresholds")
    common(p)
    p.add_argument("--regime", choices=["general", "clifford"])
    p.add_argument("--protocol", choices=["pauli", "clifford", "process"])
    p.set_defaults(func=run_plan)

    p = sub.add_parser("acquire", help="run one seeded acquisition")
    common(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--record-out", help="JSONL record path")
    p.add_argument("--trajectory-out", help="ground-truth trajectory (.npy)")
    p.set_defaults(func=run_acquire)

    p = sub.add_parser("estimate", help="estimate observables from a saved record")
    common(p)
    p.add_argument("--record-in", "--record", dest="record_in", help="JSONL record path")
    p.add_argument("--trajectory-in", help="ground-truth trajectory (.npy) for the target value")
    p.add_argument("--threshold", type=float, help="truncation threshold T (default: planned)")
    p.set_defaults(func=run_estimate)

    for name, fn, help_ in (
        ("experiment", run_experiment, "coverage experiment over seeded trials"),
        ("compare", run_compare, "truncated vs plain vs median-of-means"),
    ):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out-dir")
        p.set_defaults(func=fn)

    p = sub.add_parser("validate", help="run exact oracle suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only this suite (repeatable)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=run_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShadowsError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
