"""Post-hoc verification of operation histories and replica traces."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import search as _search
from .types import (
    BOTTOM,
    INITIAL_VALUE,
    READ,
    WRITE,
    Operation,
    OperationRecord,
    ReplicaState,
    UpdateTag,
    fold_checksum,
)

DEFAULT_MAX_OPS = 14
MAX_OPS_ENV = "DSMSIM_MAX_CHECK_OPS"


def max_check_ops() -> int:
    raw = os.environ.get(MAX_OPS_ENV)
    return int(raw) if raw else DEFAULT_MAX_OPS


@dataclass
class Verdict:
    status: str
    checker: str
    witness: Optional[list] = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def __bool__(self) -> bool:
        return self.ok

    def as_dict(self) -> dict:
        out = {"checker": self.checker, "status": self.status}
        if self.reason:
            out["reason"] = self.reason
        if self.witness is not None:
            out["witness"] = [list(w) for w in self.witness]
        return out


def _ok(checker, witness=None, reason=""):
    return Verdict("ok", checker, witness, reason)


def _bad(checker, reason, witness=None):
    return Verdict("violation", checker, witness, reason)


@dataclass
class History:
    records: list = field(default_factory=list)

    def for_client(self, client: int) -> list:
        return [r for r in self.records if r.client == client]

    @property
    def clients(self) -> list:
        return sorted({r.client for r in self.records})

    def shared(self) -> list:
        return [r for r in self.records if r.op.is_shared]

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_trace(cls, events: Iterable[dict]) -> "History":
        """Effective history: responses that survived every rollback.

        A rollback restores each client's program counter; records at or past
        that counter were undone and are dropped.
        """
        effective: dict = {}
        pending: dict = {}
        for e in events:
            ev = e["ev"]
            if ev == "invoke":
                op = Operation(e["kind"], e.get("var"), e.get("value"), e["op"])
                pending[e["client"]] = OperationRecord(e["client"], op, e["t"])
            elif ev == "respond":
                rec = pending.pop(e["client"])
                if rec.op.index != e["op"]:
                    raise ValueError(f"response for op {e['op']} while op {rec.op.index} pending at client {e['client']}")
                rec.response_time = e["t"]
                rec.response_value = e.get("value") if rec.op.kind != WRITE else None
                if e.get("tag") is not None:
                    rec.tag = UpdateTag(*e["tag"])
                effective.setdefault(e["client"], []).append(rec)
            elif ev == "rollback":
                pending.clear()
                for c, pc in enumerate(e["pcs"]):
                    effective[c] = [r for r in effective.get(c, []) if r.op.index < pc]
        records = [r for c in sorted(effective) for r in effective[c]]
        records.sort(key=lambda r: (r.invoke_time, r.client, r.op.index))
        return cls(records)


# -- serialization search ------------------------------------------------------


def _encode(records: list, realtime: bool):
    var_ids: dict = {}
    classes: dict = {}

    def class_of(var, value, create):
        table = classes.setdefault(var, {INITIAL_VALUE: 0})
        if value not in table:
            if not create:
                return -1
            table[value] = len(table)
        return table[value]

    req, is_read, var, cls = [], [], [], []
    for r in records:
        var.append(var_ids.setdefault(r.op.var, len(var_ids)))
        is_read.append(r.op.kind == READ)
        req.append(0)
    for i, r in enumerate(records):
        if r.op.kind == WRITE:
            cls.append(class_of(r.op.var, r.op.value, True))
        else:
            cls.append(None)
    for i, r in enumerate(records):
        if r.op.kind == READ:
            cls[i] = class_of(r.op.var, r.response_value, False)

    last_of_client: dict = {}
    for i, r in sorted(enumerate(records), key=lambda p: (p[1].client, p[1].op.index)):
        prev = last_of_client.get(r.client)
        if prev is not None:
            req[i] |= 1 << prev
        last_of_client[r.client] = i
    if realtime:
        for i, a in enumerate(records):
            for j, b in enumerate(records):
                if a.response_time < b.invoke_time:
                    req[j] |= 1 << i
    return req, is_read, var, cls, len(var_ids)


def replay_serialization(records: list, order: list) -> bool:
    """True iff executing ``order`` serially reproduces every read's value."""
    mem: dict = {}
    for i in order:
        r = records[i]
        if r.op.kind == WRITE:
            mem[r.op.var] = r.op.value
        elif mem.get(r.op.var, INITIAL_VALUE) != r.response_value:
            return False
    return sorted(order) == list(range(len(records)))


def _check_serializable(h: History, realtime: bool, checker: str, max_ops, backend) -> Verdict:
    records = [r for r in h.shared() if r.complete]
    bound = max_check_ops() if max_ops is None else max_ops
    if len(records) > bound:
        return Verdict("unchecked", checker, reason=f"{len(records)} operations exceeds search bound {bound}")
    req, is_read, var, cls, n_vars = _encode(records, realtime)
    fn = _search.search if backend is None else _search.BACKENDS[backend]
    order, explored = fn(req, is_read, var, cls, n_vars)
    if order is None:
        return _bad(checker, f"no legal serialization among {len(records)} operations ({explored} states explored)")
    witness = [(records[i].client, records[i].op.index) for i in order]
    return _ok(checker, witness)


def check_linearizable(h: History, max_ops: Optional[int] = None, backend: Optional[str] = None) -> Verdict:
    return _check_serializable(h, True, "linearizable", max_ops, backend)


def check_sequential(h: History, max_ops: Optional[int] = None, backend: Optional[str] = None) -> Verdict:
    return _check_serializable(h, False, "sequential", max_ops, backend)


# -- replica-state checks ------------------------------------------------------


def _as_state(s) -> ReplicaState:
    return s if isinstance(s, ReplicaState) else ReplicaState.from_json(s)


def check_convergence(states: list, with_tags: bool = True) -> Verdict:
    states = [_as_state(s) for s in states]
    if len(states) <= 1:
        return _ok("convergence")
    ref = states[0]
    for idx, s in enumerate(states[1:], start=1):
        for name in sorted(set(ref.vars) | set(s.vars)):
            a, b = ref.read(name), s.read(name)
            if a.value != b.value or (with_tags and a.tag != b.tag):
                return _bad("convergence", f"variable {name!r}: replica 0 has {a.value} {tuple(a.tag)}, replica {idx} has {b.value} {tuple(b.tag)}")
    return _ok("convergence")


def _final_states(trace: list) -> list:
    finals = [e for e in trace if e["ev"] == "final"]
    if not finals:
        raise ValueError("trace has no final event")
    return [_as_state(s) for s in finals[-1]["states"]]


def audit_apply_log(trace: list, causal: bool = True) -> list:
    """Replay per-replica apply events against their piggybacked vectors.

    Each apply of origin o's write with vector m at a replica whose applied
    vector is a needs a[o] == m[o] - 1 (FIFO) and, when ``causal``,
    a[k] >= m[k] for every other k. Returns a list of problem strings.
    """
    applied: Optional[list] = None
    problems = []
    for e in trace:
        ev = e["ev"]
        if ev == "rollback":
            applied = [list(s["vts"]) for s in e["states"]]
        elif ev == "apply":
            m = e["vts"]
            if applied is None:
                n = len(m)
                applied = [[0] * n for _ in range(n)]
            a = applied[e["node"]]
            o = e["origin"]
            if a[o] != m[o] - 1:
                problems.append(f"seq {e['seq']}: replica {e['node']} applied write #{m[o]} of {o} after #{a[o]}")
            elif causal:
                missing = [k for k in range(len(m)) if k != o and a[k] < m[k]]
                if missing:
                    problems.append(
                        f"seq {e['seq']}: replica {e['node']} applied {o}'s write {e['var']}={e['value']} "
                        f"before its causal predecessors from {missing}"
                    )
            a[o] = max(a[o], m[o])
    return problems


def _max_tag_problems(h: History, states: list) -> list:
    best: dict = {}
    for r in h.shared():
        if r.op.kind == WRITE:
            cur = best.get(r.op.var)
            if cur is None or r.tag > cur.tag:
                best[r.op.var] = r
    problems = []
    for idx, s in enumerate(states):
        names = set(s.vars) | set(best)
        for name in sorted(names):
            tv = s.read(name)
            w = best.get(name)
            exp_value, exp_tag = (w.op.value, w.tag) if w else (INITIAL_VALUE, BOTTOM)
            if tv.value != exp_value or tv.tag != exp_tag:
                problems.append(f"replica {idx} holds {name}={tv.value} {tuple(tv.tag)}, max-tag write is {exp_value} {tuple(exp_tag)}")
    return problems


def _require_tags(h: History) -> None:
    for r in h.shared():
        if r.tag is None:
            raise ValueError(f"client {r.client} op {r.op.index} lacks tag metadata")


def _happened_before(records: list, writes_by_tag: dict) -> list:
    """Transitive predecessor sets under program order plus read-from."""
    n = len(records)
    pos = {(r.client, r.op.index): i for i, r in enumerate(records)}
    direct = [set() for _ in range(n)]
    for i, r in enumerate(records):
        prev = pos.get((r.client, r.op.index - 1))
        if prev is not None:
            direct[i].add(prev)
        if r.op.kind == READ and r.tag != BOTTOM:
            w = writes_by_tag.get(r.tag)
            if w is not None:
                direct[i].add(pos[(w.client, w.op.index)])
    preds: list = [None] * n

    def closure(i, stack):
        if preds[i] is not None:
            return preds[i]
        if i in stack:
            return set()
        stack.add(i)
        acc = set()
        for p in direct[i]:
            acc.add(p)
            acc |= closure(p, stack)
        stack.discard(i)
        preds[i] = acc
        return acc

    for i in range(n):
        closure(i, set())
    return preds


def check_causal_plus(h: History, trace: list) -> Verdict:
    """Causal+ audit: causal apply order, causally consistent reads, max-tag convergence."""
    _require_tags(h)
    problems = audit_apply_log(trace, causal=True)

    records = [r for r in h.shared() if r.complete]
    writes_by_tag = {r.tag: r for r in records if r.op.kind == WRITE}
    preds = _happened_before(records, writes_by_tag)
    pos = {id(r): i for i, r in enumerate(records)}
    for i, r in enumerate(records):
        if r.op.kind == WRITE:
            for p in preds[i]:
                w2 = records[p]
                if w2.op.kind == WRITE and w2.op.var == r.op.var and w2.tag > r.tag:
                    problems.append(f"client {r.client} op {r.op.index}: write tag {tuple(r.tag)} below causally earlier write {tuple(w2.tag)}")
            continue
        if r.tag == BOTTOM:
            if r.response_value != INITIAL_VALUE:
                problems.append(f"client {r.client} op {r.op.index}: initial tag but value {r.response_value}")
        else:
            w = writes_by_tag.get(r.tag)
            if w is None:
                problems.append(f"client {r.client} op {r.op.index}: read from unknown write {tuple(r.tag)}")
                continue
            if w.op.var != r.op.var or w.op.value != r.response_value:
                problems.append(f"client {r.client} op {r.op.index}: value {r.response_value} does not match source write")
            if i in preds[pos[id(w)]]:
                problems.append(f"client {r.client} op {r.op.index}: read from a causally later write")
        for p in preds[i]:
            w2 = records[p]
            if w2.op.kind == WRITE and w2.op.var == r.op.var and w2.tag > r.tag:
                problems.append(
                    f"client {r.client} op {r.op.index}: returned {r.op.var}={r.response_value} {tuple(r.tag)} "
                    f"but causally preceding write {w2.op.value} {tuple(w2.tag)} is newer"
                )
                break

    problems += _max_tag_problems(h, _final_states(trace))
    if problems:
        return _bad("causal+", "; ".join(problems[:5]) + (f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""))
    return _ok("causal+")


def check_eventual(h: History, trace: list) -> Verdict:
    """FIFO application per origin plus convergence to the max-tag write."""
    _require_tags(h)
    problems = audit_apply_log(trace, causal=False)
    problems += _max_tag_problems(h, _final_states(trace))
    if problems:
        return _bad("eventual", "; ".join(problems[:5]))
    return _ok("eventual")


def check_total_order(trace: list) -> Verdict:
    """Every replica applies writes in one common order (per rollback incarnation)."""
    logs: dict = {}
    problems = []

    def compare():
        seqs = list(logs.values())
        for s in seqs:
            ref = max(seqs, key=len)
            if s != ref[: len(s)]:
                problems.append("replica apply logs diverge")
                return

    for e in trace:
        if e["ev"] == "rollback":
            compare()
            logs = {}
        elif e["ev"] == "apply":
            logs.setdefault(e["node"], []).append((e["origin"], e["index"]))
    compare()
    if problems:
        return _bad("total_order", problems[0])
    return _ok("total_order")


def check_exactly_once(h: History, programs: list, final_clients: Optional[list] = None) -> Verdict:
    """Each client's effective records are a prefix of its program, once each, in order."""
    problems = []
    for c, program in enumerate(programs):
        recs = h.for_client(c)
        indices = [r.op.index for r in recs]
        if indices != list(range(len(recs))):
            problems.append(f"client {c}: op indices {indices} are not 0..{len(recs) - 1} exactly once")
            continue
        if len(recs) > len(program):
            problems.append(f"client {c}: {len(recs)} responses for a {len(program)}-op program")
            continue
        for r in recs:
            op = program[r.op.index]
            if (op.kind, op.var, op.value) != (r.op.kind, r.op.var, r.op.value):
                problems.append(f"client {c}: op {r.op.index} recorded as {r.op} but program has {op}")
        if final_clients is not None:
            fc = final_clients[c]
            checksum = 0
            for r in recs:
                checksum = fold_checksum(checksum, r.op.index, r.response_value)
            if fc["pc"] != len(recs) or fc["local_state"]["checksum"] != checksum or fc["local_state"]["ops_done"] != len(recs):
                problems.append(f"client {c}: final local state does not match one response per effective op")
    if problems:
        return _bad("exactly_once", "; ".join(problems))
    return _ok("exactly_once")
