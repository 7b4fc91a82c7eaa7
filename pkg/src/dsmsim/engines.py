"""Replica-side protocol state machines for the four models, and the client loop."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

from .errors import ProtocolViolation
from .types import (
    READ,
    WRITE,
    ClientState,
    Message,
    Operation,
    ReplicaState,
    TaggedValue,
    UpdateTag,
    WriteEntry,
    apply_if_newer,
)


class EngineKind(str, enum.Enum):
    LINEARIZABLE = "lin"
    SEQUENTIAL = "sc"
    CAUSAL_PLUS = "causal+"
    EVENTUAL = "eventual"

    @classmethod
    def parse(cls, name: str) -> "EngineKind":
        for kind in cls:
            if kind.value == name:
                return kind
        legal = ", ".join(repr(k.value) for k in cls)
        raise ValueError(f"unknown model {name!r}; expected one of {legal}")

    @property
    def convergent(self) -> bool:
        return self in (EngineKind.CAUSAL_PLUS, EngineKind.EVENTUAL)


@dataclass
class PendingClientOp:
    op: Operation
    awaiting: bool = True


# Control traffic is never held back behind a marker.
_CONTROL = frozenset({"marker_ack", "checkpoint_done"})


class Replica:
    kind: EngineKind

    def __init__(self, rid: int, n: int, sim):
        self.id = rid
        self.n = n
        self.sim = sim
        self.state = ReplicaState(n)
        self.pending = None
        self.blocked = False
        self.deferred = deque()
        self.own_writes: list = []
        self.issued = 0
        self.marked_epoch = None

    def receive(self, msg: Message, via: str = "") -> None:
        if self.blocked and msg.kind not in _CONTROL:
            self.deferred.append((msg, via))
            return
        self._dispatch(msg, via)

    def unblock(self) -> None:
        self.blocked = False
        while self.deferred and not self.blocked:
            msg, via = self.deferred.popleft()
            self._dispatch(msg, via)

    def _dispatch(self, msg: Message, via: str) -> None:
        kind = msg.kind
        if kind == "client_request":
            op = msg.body["op"]
            if self.pending is not None:
                raise ProtocolViolation(f"replica {self.id}: request for op {op.index} while op {self.pending.op.index} incomplete")
            self.pending = PendingClientOp(op)
            self.handle_client(op)
        elif kind == "write":
            self.on_write(msg)
        elif kind == "read":
            self.on_read(msg)
        elif kind == "marker":
            self.sim.checkpoints.replica_on_marker(self, msg)
        elif kind == "marker_ack":
            self.sim.checkpoints.on_marker_ack(self, msg)
        elif kind == "checkpoint_done":
            self.sim.checkpoints.on_checkpoint_done(self, msg)
        else:
            raise ProtocolViolation(f"replica {self.id}: unexpected message {kind!r}")

    def ack(self, op_index: int, value=None, tag=None) -> None:
        self.pending = None
        body = {"op": op_index, "value": value, "tag": tag}
        self.sim.net.to_client(self.id, Message("ack", self.id, body))

    def _write_msg(self, op: Operation, **extra) -> Message:
        body = {"var": op.var, "value": op.value, "op": op.index, "origin": self.id}
        body.update(extra)
        return Message("write", self.id, body)

    def handle_client(self, op: Operation) -> None:
        raise NotImplementedError

    def on_write(self, msg: Message) -> None:
        raise NotImplementedError

    def on_read(self, msg: Message) -> None:
        raise ProtocolViolation(f"replica {self.id}: read multicast under {self.kind.value}")

    def cast_marker(self, msg: Message) -> None:
        raise NotImplementedError


class _TotalOrderReplica(Replica):
    """Writes go through the total order; shared by linearizability and SC."""

    def handle_client(self, op: Operation) -> None:
        if op.kind == WRITE:
            self.sim.net.tomcast(self.id, self._write_msg(op))
        else:
            self.handle_read(op)

    def handle_read(self, op: Operation) -> None:
        raise NotImplementedError

    def on_write(self, msg: Message) -> None:
        b = msg.body
        origin = b["origin"]
        counts = list(self.state.vts)
        counts[origin] += 1
        self.state.vts = tuple(counts)
        # Position in the total order doubles as a tag; identical at every replica.
        tag = UpdateTag(sum(counts), origin)
        self.state.vars[b["var"]] = TaggedValue(b["value"], self.state.vts, tag)
        self.sim.trace(
            "apply", node=self.id, origin=origin, index=counts[origin], var=b["var"],
            value=b["value"], vts=list(self.state.vts), tag=list(tag), stored=True,
        )
        if origin == self.id:
            self.ack(b["op"])

    def cast_marker(self, msg: Message) -> None:
        self.sim.net.tomcast(self.id, msg)


class LinearizableReplica(_TotalOrderReplica):
    kind = EngineKind.LINEARIZABLE

    def handle_read(self, op: Operation) -> None:
        body = {"var": op.var, "op": op.index, "origin": self.id}
        self.sim.net.tomcast(self.id, Message("read", self.id, body))

    def on_read(self, msg: Message) -> None:
        b = msg.body
        if b["origin"] != self.id:
            return
        self.ack(b["op"], self.state.read(b["var"]).value)


class SequentialReplica(_TotalOrderReplica):
    kind = EngineKind.SEQUENTIAL

    def handle_read(self, op: Operation) -> None:
        self.ack(op.index, self.state.read(op.var).value)


class _ConvergentReplica(Replica):
    """Lamport-tagged last-writer-wins replica shared by causal+ and eventual."""

    def cast(self, msg: Message) -> None:
        raise NotImplementedError

    def handle_client(self, op: Operation) -> None:
        if op.kind == READ:
            tv = self.state.read(op.var)
            self.ack(op.index, tv.value, tv.tag)
            return
        self.issued += 1
        self.state.lamport += 1
        tag = UpdateTag(self.state.lamport, self.id)
        counts = list(self.state.vts)
        counts[self.id] = self.issued
        self.cast(self._write_msg(op, vts=tuple(counts), tag=tag, index=self.issued))

    def on_write(self, msg: Message) -> None:
        b = msg.body
        stored = apply_if_newer(self.state, b["var"], b["value"], b["vts"], b["tag"])
        self.sim.trace(
            "apply", node=self.id, origin=b["origin"], index=b["index"], var=b["var"],
            value=b["value"], vts=list(b["vts"]), tag=list(b["tag"]), stored=stored,
        )
        if b["origin"] == self.id:
            self.own_writes.append(WriteEntry(b["index"], b["var"], b["value"], tuple(b["vts"]), b["tag"]))
            # Acked even when the tag loses: the acknowledgement is unconditional.
            self.ack(b["op"], tag=b["tag"])


class CausalPlusReplica(_ConvergentReplica):
    kind = EngineKind.CAUSAL_PLUS

    def cast(self, msg: Message) -> None:
        self.sim.net.comcast(self.id, msg)

    def cast_marker(self, msg: Message) -> None:
        if self.sim.marker_transport == "fifo":
            # Deliberately broken ordering, used to show the marker audit trips.
            self.sim.net.fifocast(self.id, msg)
        else:
            self.sim.net.comcast(self.id, msg)


class EventualReplica(_ConvergentReplica):
    kind = EngineKind.EVENTUAL

    def cast(self, msg: Message) -> None:
        self.sim.net.fifocast(self.id, msg)

    def cast_marker(self, msg: Message) -> None:
        for j in range(self.n):
            if j != self.id:
                self.sim.net.send_p2p(self.id, j, msg)


REPLICA_CLASSES = {
    EngineKind.LINEARIZABLE: LinearizableReplica,
    EngineKind.SEQUENTIAL: SequentialReplica,
    EngineKind.CAUSAL_PLUS: CausalPlusReplica,
    EngineKind.EVENTUAL: EventualReplica,
}


def make_replica(kind: EngineKind, rid: int, n: int, sim) -> Replica:
    return REPLICA_CLASSES[kind](rid, n, sim)


class Client:
    """Issues its program one operation at a time to the co-located replica."""

    def __init__(self, cid: int, program: list, sim):
        self.id = cid
        self.sim = sim
        self.state = ClientState(list(program))
        self.awaiting = None
        self.in_local = None
        self._local_token = 0

    @property
    def program(self) -> list:
        return self.state.program

    @property
    def finished(self) -> bool:
        return self.awaiting is None and self.in_local is None and self.state.pc >= len(self.program)

    def reset(self, local_state: dict, pc: int) -> None:
        self.state.restore(local_state, pc)
        self.awaiting = None
        self.in_local = None

    def step(self) -> None:
        if self.awaiting is not None or self.in_local is not None:
            return
        if self.state.pc >= len(self.program):
            return
        op = self.program[self.state.pc]
        self.sim.trace("invoke", client=self.id, op=op.index, kind=op.kind, var=op.var, value=op.value)
        if op.is_shared:
            self.awaiting = op
            self.sim.net.to_replica(self.id, Message("client_request", self.id, {"op": op}))
        else:
            self.in_local = op
            self._local_token += 1
            self.sim.queue.schedule(self.sim.think_time(), ("local_done", self.id, self._local_token))

    def receive(self, msg: Message) -> None:
        if msg.kind == "ack":
            self.on_ack(msg)
        elif msg.kind == "marker":
            self.sim.checkpoints.client_on_marker(self, msg)
        else:
            raise ProtocolViolation(f"client {self.id}: unexpected message {msg.kind!r}")

    def on_ack(self, msg: Message) -> None:
        b = msg.body
        if self.awaiting is None or b["op"] != self.awaiting.index:
            raise ProtocolViolation(f"client {self.id}: ack for op {b['op']} which is not pending")
        op = self.awaiting
        self.awaiting = None
        self._complete(op, b.get("value"), b.get("tag"))

    def on_local_done(self, token: int) -> None:
        if self.in_local is not None and token == self._local_token:
            self.finish_local()

    def finish_local(self) -> None:
        op = self.in_local
        self.in_local = None
        self._complete(op, op.value, None)

    def _complete(self, op: Operation, value, tag) -> None:
        self.state.record_response(op.index, value)
        self.sim.trace(
            "respond", client=self.id, op=op.index, value=value,
            tag=list(tag) if tag is not None else None, checksum=self.state.checksum,
        )
        self.sim.queue.schedule(self.sim.think_time(), ("client_step", self.id))
