"""Marker-based checkpointing and whole-system rollback.

The initiator records the only full replica state. Under causal+ and eventual
consistency every other replica also records its own writes that the
initiator had not yet applied when it emitted the marker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engines import EngineKind
from .errors import CheckpointFormatError, MarkerAuditError
from .types import Message, ReplicaState, WriteEntry, apply_if_newer

FORMAT_VERSION = 1
FORMAT_NAME = "dsmsim-checkpoint"


def _initial_local_state() -> dict:
    return {"ops_done": 0, "checksum": 0, "last_response": None}


@dataclass
class CheckpointRecord:
    epoch: int
    initiator: int
    model: EngineKind
    n: int
    initiator_state: Optional[ReplicaState] = None
    clients: list = field(default_factory=list)
    incrementals: list = field(default_factory=list)
    complete: bool = False

    def __post_init__(self):
        if not self.clients:
            self.clients = [None] * self.n
        if not self.incrementals:
            self.incrementals = [[] for _ in range(self.n)]

    @classmethod
    def initial(cls, model: EngineKind, n: int) -> "CheckpointRecord":
        """Epoch 0: the initial system state, so rollback always has a target."""
        return cls(
            0, 0, model, n, ReplicaState(n),
            [(_initial_local_state(), 0) for _ in range(n)],
            [[] for _ in range(n)], True,
        )

    def to_json(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "model": self.model.value,
            "n": self.n,
            "epoch": self.epoch,
            "initiator": self.initiator,
            "complete": self.complete,
            "initiator_state": self.initiator_state.to_json() if self.initiator_state else None,
            "clients": [None if c is None else {"local_state": c[0], "pc": c[1]} for c in self.clients],
            "incrementals": [[w.to_json() for w in lst] for lst in self.incrementals],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CheckpointRecord":
        if data.get("format") != FORMAT_NAME:
            raise CheckpointFormatError(f"not a checkpoint file (format={data.get('format')!r})")
        if data.get("version") != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {data.get('version')!r}")
        try:
            state = data["initiator_state"]
            return cls(
                epoch=data["epoch"],
                initiator=data["initiator"],
                model=EngineKind.parse(data["model"]),
                n=data["n"],
                initiator_state=ReplicaState.from_json(state) if state is not None else None,
                clients=[None if c is None else (c["local_state"], c["pc"]) for c in data["clients"]],
                incrementals=[[WriteEntry.from_json(w) for w in lst] for lst in data["incrementals"]],
                complete=data["complete"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointFormatError(f"malformed checkpoint record: {exc}") from exc


def save_record(record: CheckpointRecord, path) -> None:
    Path(path).write_text(json.dumps(record.to_json(), sort_keys=True, indent=1) + "\n")


def load_record(path) -> CheckpointRecord:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return CheckpointRecord.from_json(data)


@dataclass(frozen=True)
class CheckpointCostReport:
    full_replica_states_recorded: int
    incremental_update_count: int
    bytes_estimate: int

    def as_dict(self) -> dict:
        return {
            "full_replica_states_recorded": self.full_replica_states_recorded,
            "incremental_update_count": self.incremental_update_count,
            "bytes_estimate": self.bytes_estimate,
        }


def _compact(obj) -> int:
    return len(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def cost_report(record: CheckpointRecord) -> CheckpointCostReport:
    if not record.complete:
        raise ValueError(f"checkpoint epoch {record.epoch} is not complete")
    entries = [w for lst in record.incrementals for w in lst]
    return CheckpointCostReport(
        full_replica_states_recorded=1,
        incremental_update_count=len(entries),
        bytes_estimate=_compact(record.initiator_state.to_json()) + sum(_compact(w.to_json()) for w in entries),
    )


def replay_incrementals(state: ReplicaState, record: CheckpointRecord) -> None:
    """Apply every recorded incremental list, origin-major, each in issue order."""
    for lst in record.incrementals:
        for w in lst:
            apply_if_newer(state, w.var, w.value, w.vts, w.tag)


class CheckpointManager:
    """Tracks the in-flight checkpoint and the rollback target for one simulation."""

    def __init__(self, sim):
        self.sim = sim
        self.model = sim.model
        self.n = sim.n
        self.records = {0: CheckpointRecord.initial(self.model, self.n)}
        self.last_complete = self.records[0]
        self.current: Optional[CheckpointRecord] = None
        self.next_epoch = 1
        self._reported: set = set()
        self._pending_incrementals: dict = {}
        self.audits = 0

    # -- initiation ------------------------------------------------------------

    def initiate_checkpoint(self, initiator: int) -> Optional[int]:
        if self.current is not None:
            self.sim.trace("checkpoint_rejected", node=initiator, busy_epoch=self.current.epoch)
            return None
        epoch = self.next_epoch
        self.next_epoch += 1
        self.current = CheckpointRecord(epoch, initiator, self.model, self.n)
        self._reported = set()
        self._pending_incrementals = {}
        replica = self.sim.replicas[initiator]
        vts = tuple(replica.state.vts) if self.model.convergent else None
        msg = Message("marker", initiator, {"epoch": epoch, "initiator": initiator, "vts": vts})
        self.sim.trace("checkpoint_start", node=initiator, epoch=epoch, vts=list(vts) if vts else None)
        if self.model == EngineKind.EVENTUAL:
            # Sending the markers and both replica steps happen in one atomic action.
            replica.cast_marker(msg)
            self.replica_on_marker(replica, msg)
        else:
            replica.cast_marker(msg)
        return epoch

    # -- marker handling -------------------------------------------------------

    def replica_on_marker(self, replica, msg: Message) -> None:
        b = msg.body
        epoch = b["epoch"]
        rec = self.current
        if rec is None or rec.epoch != epoch:
            self.sim.trace("marker_stale", node=replica.id, epoch=epoch)
            return
        if replica.marked_epoch == epoch:
            self.sim.trace("marker_duplicate", node=replica.id, epoch=epoch, sender=msg.sender)
            return
        replica.marked_epoch = epoch
        initiator = b["initiator"]
        self.sim.trace("marker", node=replica.id, epoch=epoch, sender=msg.sender, vts=list(replica.state.vts))

        if replica.id == initiator:
            rec.initiator_state = replica.state.copy()
        elif self.model.convergent:
            v_init = b["vts"]
            if self.model == EngineKind.CAUSAL_PLUS:
                self._audit_marker(replica, v_init, initiator)
            else:
                fwd = Message("marker", replica.id, dict(b))
                for k in range(self.n):
                    if k != replica.id:
                        self.sim.net.send_p2p(replica.id, k, fwd)
            threshold = v_init[replica.id]
            self._pending_incrementals[replica.id] = [w for w in replica.own_writes if w.index > threshold]

        replica.blocked = True
        self.sim.net.to_client(replica.id, Message("marker", replica.id, {"epoch": epoch}))

    def _audit_marker(self, replica, v_init, initiator: int) -> None:
        self.audits += 1
        local = replica.state.vts
        bad = [k for k in range(self.n) if k != initiator and local[k] < v_init[k]]
        if bad:
            self.sim.trace("marker_audit_failed", node=replica.id, local=list(local), initiator_vts=list(v_init), entries=bad)
            raise MarkerAuditError(
                f"replica {replica.id} delivered marker with vts {list(local)} below initiator vts {list(v_init)} at {bad}"
            )

    def client_on_marker(self, client, msg: Message) -> tuple:
        if client.in_local is not None:
            client.finish_local()
        # pc already names the incomplete shared op, or the next op when idle.
        local_state = client.state.local_state()
        pc = client.state.pc
        self.sim.trace("client_marker", client=client.id, epoch=msg.body["epoch"], pc=pc, local_state=local_state)
        ack = Message("marker_ack", client.id, {"epoch": msg.body["epoch"], "local_state": local_state, "pc": pc})
        self.sim.net.to_replica(client.id, ack)
        return local_state, pc

    def on_marker_ack(self, replica, msg: Message) -> None:
        b = msg.body
        rec = self.current
        if rec is None or rec.epoch != b["epoch"]:
            replica.unblock()
            return
        report = {
            "epoch": b["epoch"],
            "local_state": b["local_state"],
            "pc": b["pc"],
            "incrementals": self._pending_incrementals.pop(replica.id, []),
        }
        done = Message("checkpoint_done", replica.id, report)
        if replica.id == rec.initiator:
            self.on_checkpoint_done(replica, done)
        else:
            self.sim.net.send_p2p(replica.id, rec.initiator, done)
        replica.unblock()

    def on_checkpoint_done(self, replica, msg: Message) -> None:
        b = msg.body
        rec = self.current
        if rec is None or rec.epoch != b["epoch"]:
            return
        j = msg.sender
        rec.clients[j] = (b["local_state"], b["pc"])
        rec.incrementals[j] = list(b["incrementals"])
        self._reported.add(j)
        if len(self._reported) == self.n:
            self.mark_complete(rec.epoch)

    def mark_complete(self, epoch: int) -> CheckpointRecord:
        rec = self.current
        if rec is None or rec.epoch != epoch or len(self._reported) != self.n or rec.initiator_state is None:
            raise ValueError(f"checkpoint epoch {epoch} has not collected every report")
        rec.complete = True
        self.records[epoch] = rec
        self.last_complete = rec
        self.current = None
        cost = cost_report(rec)
        self.sim.trace(
            "checkpoint_complete", epoch=epoch, events=self.sim.events_processed,
            cost=cost.as_dict(), record=rec.to_json(),
        )
        return rec

    # -- rollback --------------------------------------------------------------

    def rollback(self, record: CheckpointRecord) -> None:
        if not record.complete:
            raise ValueError(f"cannot roll back to incomplete checkpoint {record.epoch}")
        sim = self.sim
        sim.net.clear_network()
        sim.queue.clear()
        self.current = None
        self._pending_incrementals = {}
        for r in sim.replicas:
            r.state = record.initiator_state.copy()
            if self.model.convergent:
                replay_incrementals(r.state, record)
                r.own_writes = list(record.incrementals[r.id])
            else:
                r.own_writes = []
            r.issued = r.state.vts[r.id]
            r.blocked = False
            r.deferred.clear()
            r.pending = None
            r.marked_epoch = None
        for c, (local_state, pc) in zip(sim.clients, record.clients):
            c.reset(dict(local_state), pc)
