"""Small builders shared by the test modules."""

from __future__ import annotations

import itertools
import json

from dsmsim.checkers import History
from dsmsim.scenario import parse_scenario
from dsmsim.simulation import Simulation
from dsmsim.types import READ, WRITE, Operation, OperationRecord, UpdateTag


def w(client, index, var, value, invoke, response, tag=None):
    op = Operation(WRITE, var, value, index)
    return OperationRecord(client, op, invoke, response, None, UpdateTag(*tag) if tag else None)


def r(client, index, var, ret, invoke, response, tag=None):
    op = Operation(READ, var, None, index)
    return OperationRecord(client, op, invoke, response, ret, UpdateTag(*tag) if tag else None)


def history(*records):
    return History(list(records))


def scenario(model, programs, **kw):
    return parse_scenario({"model": model, "n": len(programs), "programs": programs, **kw})


def run_events(sc, **sim_options):
    return [json.loads(line) for line in Simulation(sc, **sim_options).run()]


def of_kind(events, kind):
    return [e for e in events if e["ev"] == kind]


def brute_force_serializable(records, realtime):
    """Oracle: try every permutation, honouring program order and optionally real time."""
    for perm in itertools.permutations(range(len(records))):
        pos = {i: k for k, i in enumerate(perm)}
        legal = True
        for a, b in itertools.permutations(range(len(records)), 2):
            ra, rb = records[a], records[b]
            before = (ra.client == rb.client and ra.op.index < rb.op.index) or (
                realtime and ra.response_time < rb.invoke_time
            )
            if before and pos[a] > pos[b]:
                legal = False
                break
        if not legal:
            continue
        mem = {}
        for i in perm:
            rec = records[i]
            if rec.op.kind == WRITE:
                mem[rec.op.var] = rec.op.value
            elif mem.get(rec.op.var, 0) != rec.response_value:
                break
        else:
            return True
    return False
