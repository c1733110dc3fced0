"""Command-line front end.

Subcommands:
  simulate      write a JSONL snapshot stream for a scenario
  detect        run a detector over a stream file or a simulated scenario
  calibrate-mc  Monte Carlo threshold calibration for a target ARL
  delay         Monte Carlo detection-delay estimate
  theory        ARL bounds (and threshold inversion) for the mixture rule
  reproduce     regenerate a benchmark table as CSV

Exit codes: 0 success/alarm, 1 I/O failure, 2 config validation failure,
3 stream exhausted without alarm, 4 theory has no tilt root.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone

import jsonschema

from .detectors import DetectorConfig, make_detector, run_until_alarm
from .graphs import ScenarioSpec, read_stream_jsonl, stream, write_stream_jsonl
from .theory import (
    TheoryError,
    TheoryParams,
    arl_lower_bound,
    arl_upper_bound,
    lb_term_profile,
    threshold_for_arl,
    ub_integrand_profile,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NO_ALARM = 3
EXIT_NO_ROOT = 4

SEED_ENV_VAR = "COMMWATCH_SEED"

_PROBABILITY = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["n_nodes", "p0", "p1"],
    "properties": {
        "n_nodes": {"type": "integer", "minimum": 2},
        "p0": {"type": "number", "minimum": 0, "maximum": 1},
        "p1": {"type": "number", "minimum": 0, "maximum": 1},
        "changepoint": {"type": ["integer", "null"], "minimum": 0},
        "community": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "active_edges": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                      "minItems": 2, "maxItems": 2},
        },
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

DETECTOR_SCHEMA = {
    "type": "object",
    "required": ["method", "p0", "threshold"],
    "properties": {
        "method": {"enum": ["es", "mixture", "hmix"]},
        "p0": _PROBABILITY,
        "p1": {**_PROBABILITY, "type": ["number", "null"]},
        "s": {"type": ["integer", "null"], "minimum": 2},
        "alpha": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
        "m0": {"type": "integer", "minimum": 0},
        "m1": {"type": ["integer", "null"], "minimum": 0},
        "threshold": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

THEORY_SCHEMA = {
    "type": "object",
    "required": ["p0", "p1", "alpha", "n_nodes"],
    "properties": {
        "p0": _PROBABILITY,
        "p1": _PROBABILITY,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "b": {"type": "number", "exclusiveMinimum": 0},
        "n_nodes": {"type": "integer", "minimum": 2},
        "n_effective": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "m0": {"type": "integer", "minimum": 1},
        "m1": {"type": "integer", "minimum": 1},
        "quad_tol": {"type": "number", "exclusiveMinimum": 0},
        "z_range": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config(path, schema) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not valid JSON: {exc}", EXIT_CONFIG)
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise CliError(f"{path}: invalid field {field}: {exc.message}", EXIT_CONFIG)
    return data


def _seed_from(args, config: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return config.get("seed", 0)


def _banner(fh, args) -> None:
    if not args.no_banner:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")


def _scenario_from(args, config: dict) -> ScenarioSpec:
    try:
        return ScenarioSpec.from_json_dict(config)
    except ValueError as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_CONFIG)


def cmd_simulate(args) -> int:
    config = _load_config(args.scenario, SCENARIO_SCHEMA)
    spec = _scenario_from(args, config)
    seed = _seed_from(args, config)
    try:
        write_stream_jsonl(args.out, spec, seed, args.steps)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO)
    return EXIT_OK


def cmd_detect(args) -> int:
    det_cfg = _load_config(args.detector, DETECTOR_SCHEMA)
    try:
        config = DetectorConfig.from_json_dict(det_cfg)
    except ValueError as exc:
        raise CliError(f"invalid detector config: {exc}", EXIT_CONFIG)

    if args.stream:
        n_nodes = args.n_nodes
        if n_nodes is None:
            raise CliError("--n-nodes is required with --stream", EXIT_CONFIG)
        snapshots = read_stream_jsonl(args.stream, n_nodes)
    else:
        scen_cfg = _load_config(args.scenario, SCENARIO_SCHEMA)
        scenario = _scenario_from(args, scen_cfg)
        n_nodes = scenario.n_nodes
        handle = stream(scenario, _seed_from(args, scen_cfg))
        snapshots = (next(handle) for _ in iter(int, 1))

    if config.method in ("es", "hmix") and config.s > n_nodes:
        raise CliError(f"s={config.s} exceeds stream n_nodes={n_nodes}", EXIT_CONFIG)
    detector = make_detector(config, n_nodes)

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        _banner(out, args)
        writer = csv.writer(out)
        writer.writerow(["t", "statistic", "argmax_k", "alarmed", "localized_set"])
        alarmed = False
        for i, snap in enumerate(snapshots):
            if snap.n_nodes != n_nodes:
                raise CliError("stream node count mismatch", EXIT_CONFIG)
            rep = detector.step(snap)
            loc = "" if rep.localized_set is None else \
                " ".join(str(v) for v in sorted(rep.localized_set))
            writer.writerow([rep.t, repr(rep.statistic), rep.argmax_k,
                             int(rep.alarmed), loc])
            if rep.alarmed:
                alarmed = True
                print(f"alarm at t={rep.t}, statistic={rep.statistic:.6g}",
                      file=sys.stderr)
                break
            if args.max_steps and i + 1 >= args.max_steps:
                break
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if alarmed else EXIT_NO_ALARM


def cmd_calibrate_mc(args) -> int:
    from .harness import calibrate_threshold_mc

    det_cfg = _load_config(args.detector, DETECTOR_SCHEMA)
    det_cfg.setdefault("threshold", 1.0)
    scen_cfg = _load_config(args.scenario, SCENARIO_SCHEMA)
    try:
        config = DetectorConfig.from_json_dict(det_cfg)
        scenario = ScenarioSpec.from_json_dict(scen_cfg)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    if not math.isinf(scenario.changepoint):
        raise CliError("calibration scenario must have no changepoint", EXIT_CONFIG)
    b, report = calibrate_threshold_mc(
        config, scenario, args.target_arl, tol=args.tol,
        n_trials=args.trials, base_seed=_seed_from(args, scen_cfg))
    print(json.dumps({
        "threshold": b,
        "achieved_arl": report.point,
        "std_error": report.std_error,
        "n_trials": report.n_trials,
        "n_censored": report.n_censored,
    }, indent=2))
    return EXIT_OK


def cmd_delay(args) -> int:
    from .harness import ExperimentSpec, estimate_delay

    det_cfg = _load_config(args.detector, DETECTOR_SCHEMA)
    scen_cfg = _load_config(args.scenario, SCENARIO_SCHEMA)
    try:
        config = DetectorConfig.from_json_dict(det_cfg)
        scenario = ScenarioSpec.from_json_dict(scen_cfg)
        spec = ExperimentSpec(scenario, config, args.trials, args.max_t,
                              _seed_from(args, scen_cfg))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    report = estimate_delay(spec)
    print(json.dumps({
        "delay": report.point,
        "std_error": report.std_error,
        "n_trials": report.n_trials,
        "n_censored": report.n_censored,
    }, indent=2))
    return EXIT_OK


def cmd_theory(args) -> int:
    config = _load_config(args.params, THEORY_SCHEMA)
    if args.target_arl is None and "b" not in config:
        raise CliError("theory config needs 'b' (or pass --target-arl)", EXIT_CONFIG)
    try:
        if args.target_arl is not None:
            params = TheoryParams.from_json_dict({**config, "b": config.get("b", 7.0)})
            b = threshold_for_arl(params, args.target_arl, args.bound)
            print(json.dumps({"threshold": b, "target_arl": args.target_arl,
                              "bound": args.bound}, indent=2))
            return EXIT_OK
        params = TheoryParams.from_json_dict(config)
        result = {"b": params.b,
                  "arl_lb": arl_lower_bound(params),
                  "arl_ub": arl_upper_bound(params)}
    except TheoryError as exc:
        raise CliError(f"theory evaluation failed: {exc}", EXIT_NO_ROOT)
    print(json.dumps(result, indent=2))
    if args.dump_profiles:
        base, _ = os.path.splitext(args.params)
        lb_path = base + "_lb_terms.csv"
        ub_path = base + "_ub_integrand.csv"
        with open(lb_path, "w", newline="") as fh:
            _banner(fh, args)
            w = csv.DictWriter(fh, ["tau", "theta", "gamma", "log_H", "term"])
            w.writeheader()
            w.writerows(lb_term_profile(params))
        with open(ub_path, "w", newline="") as fh:
            _banner(fh, args)
            w = csv.DictWriter(fh, ["y", "tau", "integrand"])
            w.writeheader()
            w.writerows(ub_integrand_profile(params))
        print(f"profiles written to {lb_path}, {ub_path}", file=sys.stderr)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .harness import reproduce_table

    try:
        reproduce_table(args.table, args.out, n_trials=args.trials,
                        base_seed=args.seed if args.seed is not None else 99000)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commwatch",
        description="Sequential detection of an emerging community in "
                    "Erdos-Renyi graph streams",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help=f"override config seeds (also {SEED_ENV_VAR})")
    parser.add_argument("--no-banner", action="store_true",
                        help="suppress the timestamp comment in CSV output")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (estimates are identical "
                             "for any value)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a JSONL snapshot stream")
    p.add_argument("scenario")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run a detector, emit per-step CSV")
    p.add_argument("detector")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--stream", help="JSONL stream file")
    src.add_argument("--scenario", help="simulate on the fly instead")
    p.add_argument("--n-nodes", type=int, default=None,
                   help="node count of the stream file")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate-mc", help="Monte Carlo threshold calibration")
    p.add_argument("detector")
    p.add_argument("--scenario", required=True)
    p.add_argument("--target-arl", type=float, required=True)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=2000)
    p.set_defaults(func=cmd_calibrate_mc)

    p = sub.add_parser("delay", help="Monte Carlo detection-delay estimate")
    p.add_argument("detector")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--max-t", type=int, default=20000)
    p.set_defaults(func=cmd_delay)

    p = sub.add_parser("theory", help="ARL bounds for the mixture rule")
    p.add_argument("params")
    p.add_argument("--target-arl", type=float, default=None,
                   help="invert the bound for a threshold instead")
    p.add_argument("--bound", choices=["LB", "UB"], default="LB")
    p.add_argument("--dump-profiles", action="store_true")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("reproduce", help="regenerate a benchmark table")
    p.add_argument("table", type=int, choices=[2, 3, 4, 5])
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=2000)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads >= 1:
        try:
            import numba
            numba.set_num_threads(min(args.threads, numba.get_num_threads()))
        except Exception:
            pass
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
