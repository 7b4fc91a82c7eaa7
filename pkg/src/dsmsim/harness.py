"""Run orchestration: single runs, offline evaluation, cost comparison, seed sweeps."""

from __future__ import annotations

import json
import random
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .checkers import (
    History,
    Verdict,
    check_causal_plus,
    check_convergence,
    check_eventual,
    check_exactly_once,
    check_linearizable,
    check_sequential,
    check_total_order,
)
from .checkpoint import CheckpointCostReport
from .engines import EngineKind
from .scenario import Scenario, parse_scenario
from .simulation import Simulation
from .types import ReplicaState


def write_trace(lines: list, path) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_trace(path) -> list:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc.msg}") from None
    return events


def evaluate(events: list, model: Optional[EngineKind] = None) -> dict:
    """Compute every applicable verdict from trace events alone."""
    header = next((e for e in events if e["ev"] == "scenario"), None)
    if header is None:
        raise ValueError("trace has no scenario header")
    scenario = parse_scenario(header["scenario"])
    model = model or scenario.model
    history = History.from_trace(events)
    final = [e for e in events if e["ev"] == "final"][-1]
    verdicts = {"exactly_once": check_exactly_once(history, scenario.programs, final["clients"])}
    if model == EngineKind.LINEARIZABLE:
        verdicts["linearizable"] = check_linearizable(history)
        verdicts["total_order"] = check_total_order(events)
    elif model == EngineKind.SEQUENTIAL:
        verdicts["sequential"] = check_sequential(history)
        verdicts["total_order"] = check_total_order(events)
    elif model == EngineKind.CAUSAL_PLUS:
        verdicts["causal+"] = check_causal_plus(history, events)
        verdicts["convergence"] = check_convergence(final["states"])
    else:
        verdicts["eventual"] = check_eventual(history, events)
        verdicts["convergence"] = check_convergence(final["states"])
    return verdicts


@dataclass
class RunReport:
    scenario: Scenario
    effective_history: History
    final_states: list
    costs: dict
    verdicts: dict
    trace: list = field(repr=False, default_factory=list)
    lines: list = field(repr=False, default_factory=list)
    trace_path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return all(v.status != "violation" for v in self.verdicts.values())

    def events(self, kind: str) -> list:
        return [e for e in self.trace if e["ev"] == kind]

    def summary(self) -> dict:
        return {
            "scenario": self.scenario.name or None,
            "model": self.scenario.model.value,
            "seed": self.scenario.seed,
            "ops": len(self.effective_history),
            "checkpoints": {str(k): v.as_dict() for k, v in sorted(self.costs.items())},
            "rollbacks": len(self.events("rollback")),
            "verdicts": {k: v.as_dict() for k, v in self.verdicts.items()},
            "ok": self.ok,
        }


def report_from_lines(scenario: Scenario, lines: list, trace_path=None) -> RunReport:
    events = [json.loads(line) for line in lines]
    final = [e for e in events if e["ev"] == "final"][-1]
    costs = {}
    for e in events:
        if e["ev"] == "checkpoint_complete":
            costs[e["epoch"]] = CheckpointCostReport(**e["cost"])
    return RunReport(
        scenario=scenario,
        effective_history=History.from_trace(events),
        final_states=[ReplicaState.from_json(s) for s in final["states"]],
        costs=costs,
        verdicts=evaluate(events, scenario.model),
        trace=events,
        lines=lines,
        trace_path=str(trace_path) if trace_path else None,
    )


def run(scenario: Scenario, trace_path=None, **sim_options) -> RunReport:
    lines = Simulation(scenario, **sim_options).run()
    if trace_path is not None:
        write_trace(lines, trace_path)
    return report_from_lines(scenario, lines, trace_path)


def rollback_test(scenario: Scenario, checkpoint_file=None) -> dict:
    """Crash, persist the rollback target, rebuild from disk, and compare with an in-memory run."""
    if scenario.crash_at is None:
        raise ValueError("rollback-test needs a scenario with crash_at")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(checkpoint_file) if checkpoint_file else Path(tmp) / "checkpoint.json"
        restarted = run(scenario, checkpoint_file=path)
        persisted = path.exists()
    in_memory = run(scenario)
    return {
        "persisted": persisted,
        "identical_trace": restarted.lines == in_memory.lines,
        "restarted": restarted,
        "in_memory": in_memory,
        "ok": persisted and restarted.lines == in_memory.lines and restarted.ok,
    }


# -- cost comparison -----------------------------------------------------------


@dataclass(frozen=True)
class CostRow:
    model: str
    epoch: int
    full_states: int
    incremental_updates: int
    bytes: int


def compare_costs(template: Scenario) -> list:
    """Run the same workload and seed under every model; one row per completed checkpoint."""
    rows = []
    for kind in EngineKind:
        report = run(template.with_(model=kind))
        for epoch, cost in sorted(report.costs.items()):
            rows.append(CostRow(kind.value, epoch, cost.full_replica_states_recorded, cost.incremental_update_count, cost.bytes_estimate))
    return rows


def format_cost_table(rows: list) -> str:
    out = [f"{'model':<10}{'epoch':>6}{'full_states':>13}{'incremental':>13}{'bytes':>8}"]
    for r in rows:
        out.append(f"{r.model:<10}{r.epoch:>6}{r.full_states:>13}{r.incremental_updates:>13}{r.bytes:>8}")
    return "\n".join(out)


# -- sweeps --------------------------------------------------------------------


def with_random_faults(scenario: Scenario) -> Scenario:
    """Pick a checkpoint point and a crash point strictly after that checkpoint completes.

    Runs are deterministic and a trigger cannot influence earlier events, so
    dry runs tell exactly when the checkpoint finishes.
    """
    rng = random.Random(f"faults/{scenario.seed}")
    base = scenario.with_(checkpoint_at=(), crash_at=None)
    total_events = json.loads(Simulation(base).run()[-1])["events"]
    ckpt = rng.randint(1, max(1, total_events))
    events = [json.loads(line) for line in Simulation(base.with_(checkpoint_at=(ckpt,))).run()]
    done = next(e["events"] for e in events if e["ev"] == "checkpoint_complete")
    crash = rng.randint(done + 1, events[-1]["events"] + 1)
    return base.with_(checkpoint_at=(ckpt,), crash_at=crash)


@dataclass
class SweepSummary:
    runs: int = 0
    passed: int = 0
    verdict_counts: dict = field(default_factory=dict)
    unchecked: int = 0
    failures: list = field(default_factory=list)
    incremental_updates: list = field(default_factory=list)
    full_states: list = field(default_factory=list)
    rollback_epochs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def as_dict(self) -> dict:
        incr = self.incremental_updates
        return {
            "runs": self.runs,
            "passed": self.passed,
            "verdicts": self.verdict_counts,
            "unchecked": self.unchecked,
            "failures": self.failures[:10],
            "first_failure_seed": self.failures[0]["seed"] if self.failures else None,
            "checkpoints": len(self.full_states),
            "full_states_per_checkpoint": sorted(set(self.full_states)),
            "incremental_updates": {"total": sum(incr), "max": max(incr) if incr else 0},
        }


def _sweep_one(args) -> dict:
    base, seed, random_faults, random_programs, n_ops = args
    scenario = base.with_(seed=seed)
    if random_programs:
        from .scenario import generate_scenario

        gen = generate_scenario(base.model, base.n, seed, total_ops=n_ops, max_latency=base.max_latency)
        scenario = scenario.with_(programs=gen.programs, initiator=gen.initiator)
    if random_faults:
        scenario = with_random_faults(scenario)
    report = run(scenario)
    return {
        "seed": seed,
        "scenario": scenario,
        "verdicts": {k: v.status for k, v in report.verdicts.items()},
        "reasons": {k: v.reason for k, v in report.verdicts.items() if v.status == "violation"},
        "costs": [c.as_dict() for c in report.costs.values()],
        "rollback_epochs": [e["epoch"] for e in report.events("rollback")],
        "ok": report.ok,
    }


def sweep(base: Scenario, seeds, random_faults: bool = False, random_programs: bool = False,
          n_ops: Optional[int] = None, jobs: int = 1) -> SweepSummary:
    seeds = list(seeds)
    n_ops = n_ops or base.op_count or 12
    work = [(base, s, random_faults, random_programs, n_ops) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, work))
    else:
        results = [_sweep_one(w) for w in work]
    summary = SweepSummary()
    for res in results:
        summary.runs += 1
        for name, status in res["verdicts"].items():
            counts = summary.verdict_counts.setdefault(name, {"ok": 0, "violation": 0, "unchecked": 0})
            counts[status] += 1
            if status == "unchecked":
                summary.unchecked += 1
        for cost in res["costs"]:
            summary.full_states.append(cost["full_replica_states_recorded"])
            summary.incremental_updates.append(cost["incremental_update_count"])
        summary.rollback_epochs.extend(res["rollback_epochs"])
        if res["ok"]:
            summary.passed += 1
        else:
            summary.failures.append({"seed": res["seed"], "reasons": res["reasons"]})
    return summary
