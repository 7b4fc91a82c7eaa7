"""Shared vocabulary: operations, timestamps, tagged values and replica/client state."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

ReplicaId = int

WRITE = "W"
READ = "R"
LOCAL = "L"

INITIAL_VALUE = 0
_CHECKSUM_MOD = (1 << 61) - 1


class Ordering(enum.IntEnum):
    LT = -1
    EQ = 0
    GT = 1


class UpdateTag(NamedTuple):
    """(Lamport timestamp, origin replica); tuple order is the convergence order."""

    lamport: int
    origin: int

    def as_list(self) -> list:
        return [self.lamport, self.origin]


# Real writes carry lamport >= 1, so this sits below every real tag.
BOTTOM = UpdateTag(0, -1)


def compare_tags(a: UpdateTag, b: UpdateTag) -> Ordering:
    if a == b:
        return Ordering.EQ
    return Ordering.LT if a < b else Ordering.GT


def vts_leq(a: Sequence[int], b: Sequence[int]) -> bool:
    if len(a) != len(b):
        raise ValueError(f"vector length mismatch: {len(a)} != {len(b)}")
    return all(x <= y for x, y in zip(a, b))


def vts_lt(a: Sequence[int], b: Sequence[int]) -> bool:
    """Strict happened-before between two vector timestamps."""
    return vts_leq(a, b) and tuple(a) != tuple(b)


def vts_merge(a: Sequence[int], b: Sequence[int]) -> tuple:
    if len(a) != len(b):
        raise ValueError(f"vector length mismatch: {len(a)} != {len(b)}")
    return tuple(max(x, y) for x, y in zip(a, b))


@dataclass(frozen=True)
class Operation:
    kind: str
    var: Optional[str] = None
    value: Optional[int] = None
    index: int = 0

    @property
    def is_shared(self) -> bool:
        return self.kind in (WRITE, READ)

    def __str__(self) -> str:
        if self.kind == WRITE:
            return f"W {self.var} {self.value}"
        if self.kind == READ:
            return f"R {self.var}"
        return f"L {self.value}"


def parse_op(text: str, index: int) -> Operation:
    """Parse one program token: ``W <var> <int>``, ``R <var>`` or ``L <int>``."""
    parts = text.split()
    if not parts:
        raise ValueError(f"empty operation at index {index}")
    kind = parts[0].upper()
    try:
        if kind == WRITE and len(parts) == 3:
            return Operation(WRITE, parts[1], int(parts[2]), index)
        if kind == READ and len(parts) == 2:
            return Operation(READ, parts[1], None, index)
        if kind == LOCAL and len(parts) == 2:
            return Operation(LOCAL, None, int(parts[1]), index)
    except ValueError:
        pass
    raise ValueError(f"bad operation {text!r} at index {index}; expected 'W <var> <int>', 'R <var>' or 'L <int>'")


@dataclass
class OperationRecord:
    client: ReplicaId
    op: Operation
    invoke_time: int
    response_time: Optional[int] = None
    response_value: Optional[int] = None
    # Metadata used by the causal audit: own tag for writes, source tag for reads.
    tag: Optional[UpdateTag] = None

    @property
    def complete(self) -> bool:
        return self.response_time is not None


@dataclass(frozen=True)
class TaggedValue:
    value: int
    vts: tuple
    tag: UpdateTag

    def to_json(self) -> list:
        return [self.value, list(self.vts), self.tag.as_list()]

    @classmethod
    def from_json(cls, data) -> "TaggedValue":
        value, vts, tag = data
        return cls(value, tuple(vts), UpdateTag(*tag))


@dataclass
class ReplicaState:
    n: int
    vars: dict = field(default_factory=dict)
    vts: tuple = ()
    lamport: int = 0

    def __post_init__(self):
        if not self.vts:
            self.vts = (0,) * self.n

    def read(self, name: str) -> TaggedValue:
        tv = self.vars.get(name)
        if tv is None:
            return TaggedValue(INITIAL_VALUE, (0,) * self.n, BOTTOM)
        return tv

    def copy(self) -> "ReplicaState":
        return ReplicaState(self.n, dict(self.vars), tuple(self.vts), self.lamport)

    def values(self) -> dict:
        return {k: tv.value for k, tv in self.vars.items()}

    def to_json(self) -> dict:
        return {
            "vars": {k: self.vars[k].to_json() for k in sorted(self.vars)},
            "vts": list(self.vts),
            "lamport": self.lamport,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReplicaState":
        vts = tuple(data["vts"])
        return cls(
            len(vts),
            {k: TaggedValue.from_json(v) for k, v in data["vars"].items()},
            vts,
            data["lamport"],
        )


def apply_if_newer(state: ReplicaState, name: str, value: int, vts: Sequence[int], tag: UpdateTag) -> bool:
    """Store the write when its tag beats the stored one; clocks advance either way.

    Only the origin's entry of the replica vector moves: under FIFO-only
    delivery the piggybacked vector may name writes this replica has not seen.
    """
    origin = tag.origin
    if 0 <= origin < state.n:
        counts = list(state.vts)
        counts[origin] = max(counts[origin], vts[origin])
        state.vts = tuple(counts)
    state.lamport = max(state.lamport, tag.lamport) + 1
    if tag > state.read(name).tag:
        state.vars[name] = TaggedValue(value, tuple(vts), tag)
        return True
    return False


def fold_checksum(checksum: int, op_index: int, response: Optional[int]) -> int:
    r = 0 if response is None else response
    return (checksum * 1_000_003 + op_index * 7919 + r + 1) % _CHECKSUM_MOD


@dataclass
class ClientState:
    program: list
    pc: int = 0
    ops_done: int = 0
    checksum: int = 0
    last_response: Optional[int] = None

    def local_state(self) -> dict:
        return {"ops_done": self.ops_done, "checksum": self.checksum, "last_response": self.last_response}

    def restore(self, local_state: dict, pc: int) -> None:
        self.ops_done = local_state["ops_done"]
        self.checksum = local_state["checksum"]
        self.last_response = local_state["last_response"]
        self.pc = pc

    def record_response(self, op_index: int, value: Optional[int]) -> None:
        self.checksum = fold_checksum(self.checksum, op_index, value)
        self.ops_done += 1
        self.last_response = value
        self.pc = op_index + 1


@dataclass(frozen=True)
class Message:
    """Protocol message. ``body`` holds kind-specific fields (var, value, vts, tag, epoch...)."""

    kind: str
    sender: ReplicaId
    body: dict = field(default_factory=dict, compare=False)

    def describe(self) -> dict:
        out = {"kind": self.kind, "from": self.sender}
        for k in ("var", "value", "epoch", "index"):
            if k in self.body:
                out[k] = self.body[k]
        if "vts" in self.body and self.body["vts"] is not None:
            out["vts"] = list(self.body["vts"])
        if self.body.get("tag") is not None:
            out["tag"] = list(self.body["tag"])
        return out


@dataclass(frozen=True)
class WriteEntry:
    """One write as a replica logged it: per-origin index plus its timestamps."""

    index: int
    var: str
    value: int
    vts: tuple
    tag: UpdateTag

    def to_json(self) -> dict:
        return {"index": self.index, "var": self.var, "value": self.value, "vts": list(self.vts), "tag": self.tag.as_list()}

    @classmethod
    def from_json(cls, data: dict) -> "WriteEntry":
        return cls(data["index"], data["var"], data["value"], tuple(data["vts"]), UpdateTag(*data["tag"]))
