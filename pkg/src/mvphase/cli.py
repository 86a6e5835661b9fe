"""Command-line entry points: gen, run, sweep, verify.

Exit codes: 0 on success, 2 on an invalid configuration, 3 on I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .disjunct import build_disjunct_report, partition_devices
from .errors import InvalidConfigError
from .harness import MODES, SWEEP_AXES, emit_csv, run_trial_on, sweep
from .localsolve import SolveOptions
from .netsim import ProtocolOptions, run_protocol, trace_to_jsonl
from .scenario import ScenarioConfig, scenario_to_dict, synthesize_scenario, with_seed
from .support import condition_report_to_dict, check_recovery_conditions, default_eta
from .disjunct import effective_t

CONFIG_SECTIONS = ("solver",)


def _load_config(path: str) -> tuple[ScenarioConfig, SolveOptions]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise InvalidConfigError("config document must be a JSON object")
    solver_doc = doc.pop("solver", None)
    cfg = ScenarioConfig.from_dict(doc)
    solve = SolveOptions()
    if solver_doc is not None:
        known = {"restarts", "max_iters", "step0", "k_max_exhaustive",
                 "eps_zero", "seed"}
        unknown = set(solver_doc) - known
        if unknown:
            raise InvalidConfigError(f"unknown solver options: {sorted(unknown)}")
        solve = SolveOptions(**solver_doc)
    return cfg, solve


def _cmd_gen(args) -> int:
    cfg, _ = _load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    scenario = synthesize_scenario(cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh)
        fh.write("\n")
    print(f"wrote scenario (seed={cfg.seed}) to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg, solve = _load_config(args.config)
    cfg = with_seed(cfg, args.seed)
    scenario = synthesize_scenario(cfg)
    result = run_trial_on(scenario, args.mode, solve=solve)
    if args.trace is not None:
        partition = partition_devices(cfg.i_count, cfg.b_count)
        t_eff = effective_t(scenario.views, partition, scenario.signal.support)
        protocol = run_protocol(scenario, partition,
                                ProtocolOptions(eta=default_eta(max(t_eff, 0)),
                                                solve=solve))
        with open(args.trace, "w", encoding="utf-8") as fh:
            trace_to_jsonl(protocol.trace, fh, full_payload=args.full_payload)
    summary = {
        "seed": cfg.seed,
        "mode": result.mode,
        "support_exact": result.support_exact,
        "errors": list(result.errors),
        "success": list(result.success),
        "success_rate": sum(result.success) / len(result.success),
        "amplitude_max_rel_err": result.amplitude_max_rel_err,
        "condition": condition_report_to_dict(result.condition),
        "comm": result.comm,
        "audit_problems": list(result.audit_problems),
    }
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def _cmd_sweep(args) -> int:
    cfg, solve = _load_config(args.config)
    values = [float(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise InvalidConfigError("--values must list at least one sweep point")
    modes = tuple(m.strip() for m in args.modes.split(","))
    min_t_eff = None if args.min_t_eff < 0 else args.min_t_eff
    table = sweep(cfg, args.axis, values, args.trials, modes=modes,
                  master_seed=args.master_seed, min_t_eff=min_t_eff, solve=solve)
    emit_csv(table, args.out)
    print(f"wrote {len(table.rows)} rows to {args.out} "
          f"(resamples={table.resamples}, audit_ok={table.audit_ok})")
    return 0


def _cmd_verify(args) -> int:
    cfg, _ = _load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    scenario = synthesize_scenario(cfg)
    partition = partition_devices(cfg.i_count, cfg.b_count)
    report = build_disjunct_report(scenario.views, partition,
                                   scenario.signal.support, cfg.k, t=args.t)
    eta = default_eta(max(report.t_eff, 0))
    condition = check_recovery_conditions(scenario, partition, eta)
    groups = []
    for b, counts in enumerate(report.t_conditional):
        t_needed = args.t if args.t is not None else report.t_eff
        failing = np.flatnonzero(counts < t_needed + 1)
        groups.append({
            "group": b,
            "devices": list(partition.groups[b]),
            "min_private_rows": int(counts.min()),
            "t_conditional": int(counts.min()) - 1,
            "t_exact": report.t_exact[b],
            "is_disjunct": report.is_disjunct[b],
            "failing_columns": failing.tolist(),
        })
    doc = {
        "seed": cfg.seed,
        "t_eff": report.t_eff,
        "checked_t": report.checked_t,
        "eta_default": eta,
        "groups": groups,
        "conditions": condition_report_to_dict(condition),
    }
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvphase",
        description="Multi-view phaseless sensing simulator and recovery pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a scenario and write it as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run one recovery trial")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=MODES, default="proposed")
    p.add_argument("--trace", default=None, help="write the message trace as JSON lines")
    p.add_argument("--full-payload", action="store_true",
                   help="include full payload bodies in the trace dump")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="Monte Carlo sweep along one axis, CSV out")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--min-t-eff", type=int, default=3,
                   help="resample scenarios below this effective t; -1 disables")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="disjunctness / recovery-condition report")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t", type=int, default=None,
                   help="also run the exhaustive check at this t when feasible")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
