"""Command line entry point.

Exit status: 0 when every verdict holds, 1 on a verdict failure, 2 on usage or
parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .engines import EngineKind
from .errors import CheckpointFormatError, DsmError, ScenarioError
from .scenario import load_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def parse_seed_range(text: str) -> range:
    """``A..B`` is the half-open range [A, B)."""
    try:
        lo, hi = text.split("..")
        return range(int(lo), int(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}; expected A..B") from None


def _print_verdicts(verdicts: dict) -> None:
    for name, v in verdicts.items():
        line = f"  {name:<14} {v.status}"
        if v.reason:
            line += f"  ({v.reason})"
        print(line)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    report = harness.run(scenario, trace_path=args.trace)
    if args.json:
        print(json.dumps(report.summary(), indent=2, sort_keys=True))
    else:
        print(f"{scenario.model.value} n={scenario.n} seed={scenario.seed}: {len(report.effective_history)} effective ops, "
              f"{len(report.costs)} checkpoint(s), {len(report.events('rollback'))} rollback(s)")
        for epoch, cost in sorted(report.costs.items()):
            print(f"  checkpoint {epoch}: {cost.as_dict()}")
        _print_verdicts(report.verdicts)
        if args.trace:
            print(f"trace written to {args.trace}")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_check(args) -> int:
    events = harness.read_trace(args.trace)
    model = EngineKind.parse(args.model) if args.model else None
    verdicts = harness.evaluate(events, model)
    _print_verdicts(verdicts)
    return EXIT_OK if all(v.status != "violation" for v in verdicts.values()) else EXIT_FAIL


def cmd_compare(args) -> int:
    rows = harness.compare_costs(load_scenario(args.scenario))
    print(harness.format_cost_table(rows))
    lin_sc_zero = all(r.incremental_updates == 0 for r in rows if r.model in ("lin", "sc"))
    single = all(r.full_states == 1 for r in rows)
    return EXIT_OK if lin_sc_zero and single else EXIT_FAIL


def cmd_sweep(args) -> int:
    base = load_scenario(args.scenario)
    summary = harness.sweep(
        base, args.seeds, random_faults=args.random_faults, random_programs=args.random_programs,
        n_ops=args.ops, jobs=args.jobs,
    )
    print(json.dumps(summary.as_dict(), indent=2, sort_keys=True))
    if summary.failures:
        print(f"first failure: seed {summary.failures[0]['seed']}", file=sys.stderr)
    return summary.exit_code


def cmd_rollback_test(args) -> int:
    scenario = load_scenario(args.scenario)
    result = harness.rollback_test(scenario, args.checkpoint_file)
    restarted = result["restarted"]
    print(f"checkpoint persisted: {result['persisted']}")
    print(f"restart trace identical to in-memory rollback: {result['identical_trace']}")
    _print_verdicts(restarted.verdicts)
    if args.trace:
        harness.write_trace(restarted.lines, args.trace)
    return EXIT_OK if result["ok"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsmsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and check its history")
    r.add_argument("scenario")
    r.add_argument("--trace", help="write the JSONL trace here")
    r.add_argument("--json", action="store_true", help="print a JSON summary")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="re-check a recorded trace offline")
    c.add_argument("trace")
    c.add_argument("--model", choices=[k.value for k in EngineKind])
    c.set_defaults(func=cmd_check)

    cmp_ = sub.add_parser("compare", help="checkpoint cost of one workload under all four models")
    cmp_.add_argument("scenario")
    cmp_.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="run a scenario over a seed range")
    s.add_argument("scenario")
    s.add_argument("--seeds", type=parse_seed_range, required=True, help="half-open range A..B")
    s.add_argument("--random-faults", action="store_true", help="checkpoint and crash at seeded points")
    s.add_argument("--random-programs", action="store_true", help="generate programs from the seed")
    s.add_argument("--ops", type=int, default=None, help="total ops for generated programs")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    rb = sub.add_parser("rollback-test", help="crash, restart from the persisted checkpoint file, compare")
    rb.add_argument("scenario")
    rb.add_argument("--checkpoint-file")
    rb.add_argument("--trace")
    rb.set_defaults(func=cmd_rollback_test)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CheckpointFormatError, FileNotFoundError, ValueError) as exc:
        print(f"dsmsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DsmError as exc:
        print(f"dsmsim: run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
