"""Event loop tying network, replicas, clients and checkpointing together."""

from __future__ import annotations

import json
import random
from typing import Optional

from .checkpoint import CheckpointManager, load_record, save_record
from .engines import Client, make_replica
from .errors import ProtocolViolation
from .net import EventQueue, Network
from .scenario import Scenario

MAX_EVENTS = 2_000_000


def dumps_event(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


class Simulation:
    """One deterministic run of a scenario.

    ``marker_transport="fifo"`` swaps the causal+ marker onto FIFO multicast; it
    exists only to exercise the marker audit. ``checkpoint_file`` makes a crash
    persist the rollback target, rebuild every component from scratch and
    reload the record from disk before rolling back.
    """

    def __init__(self, scenario: Scenario, marker_transport: str = "model", checkpoint_file=None):
        self.scenario = scenario
        self.model = scenario.model
        self.n = scenario.n
        self.marker_transport = marker_transport
        self.checkpoint_file = checkpoint_file
        self.rng = random.Random(scenario.seed)
        self.queue = EventQueue()
        self.lines: list = []
        self.events_processed = 0
        self.rollbacks = 0
        triggers = [(c, 0, "checkpoint") for c in scenario.checkpoint_at]
        if scenario.crash_at is not None:
            triggers.append((scenario.crash_at, 1, "crash"))
        self.triggers = sorted(triggers)
        self._build()

    def _build(self) -> None:
        self.net = Network(
            self.n, self.queue, self.rng, self.scenario.max_latency, self.scenario.link_latency,
            deliver=self._deliver, to_client_cb=self._to_client, to_replica_cb=self._to_replica,
        )
        self.replicas = [make_replica(self.model, i, self.n, self) for i in range(self.n)]
        self.clients = [Client(i, self.scenario.programs[i], self) for i in range(self.n)]
        self.checkpoints = CheckpointManager(self)

    # -- plumbing used by components --------------------------------------------

    def trace(self, ev: str, **fields) -> None:
        event = {"seq": len(self.lines), "t": self.queue.now, "ev": ev}
        event.update(fields)
        self.lines.append(dumps_event(event))

    def think_time(self) -> int:
        return self.rng.randint(1, self.scenario.max_latency)

    def _deliver(self, dst: int, msg, via: str) -> None:
        self.trace("deliver", node=dst, via=via, msg=msg.describe())
        self.replicas[dst].receive(msg, via)

    def _to_client(self, node: int, msg) -> None:
        self.clients[node].receive(msg)

    def _to_replica(self, node: int, msg) -> None:
        self.replicas[node].receive(msg, "client")

    # -- main loop ------------------------------------------------------------

    def run(self) -> list:
        """Run to quiescence and return the trace as JSONL lines."""
        self.trace("scenario", scenario=self.scenario.to_json())
        self._start_clients()
        while True:
            if not len(self.queue):
                if not self.triggers:
                    break
                self._fire(self.triggers.pop(0))
                continue
            ev = self.queue.pop()
            self.events_processed += 1
            if self.events_processed > MAX_EVENTS:
                raise ProtocolViolation(f"event budget of {MAX_EVENTS} exhausted")
            self._dispatch(ev.action)
            while self.triggers and self.triggers[0][0] <= self.events_processed:
                self._fire(self.triggers.pop(0))
        stuck = [c.id for c in self.clients if not c.finished]
        if stuck:
            raise ProtocolViolation(f"quiescent with unfinished clients {stuck}")
        self.trace(
            "final",
            events=self.events_processed,
            states=[r.state.to_json() for r in self.replicas],
            clients=[{"pc": c.state.pc, "local_state": c.state.local_state()} for c in self.clients],
        )
        return self.lines

    def _start_clients(self) -> None:
        for c in self.clients:
            self.queue.schedule(self.think_time(), ("client_step", c.id))

    def _dispatch(self, action: tuple) -> None:
        kind = action[0]
        if kind == "net":
            self.net.arrive(*action[1:])
        elif kind == "client_step":
            self.clients[action[1]].step()
        elif kind == "local_done":
            self.clients[action[1]].on_local_done(action[2])
        else:
            raise ValueError(f"unknown event {action!r}")

    def _fire(self, trigger: tuple) -> None:
        kind = trigger[2]
        if kind == "checkpoint":
            self.checkpoints.initiate_checkpoint(self.scenario.initiator)
        else:
            self.crash()

    # -- faults ---------------------------------------------------------------

    def initiate_checkpoint(self, initiator: Optional[int] = None) -> Optional[int]:
        return self.checkpoints.initiate_checkpoint(self.scenario.initiator if initiator is None else initiator)

    def crash(self) -> None:
        """Whole-system crash followed by rollback to the last complete checkpoint."""
        target = self.checkpoints.last_complete
        in_flight = self.checkpoints.current
        self.trace(
            "crash", events=self.events_processed, target_epoch=target.epoch,
            discarded_epoch=in_flight.epoch if in_flight else None,
        )
        if self.checkpoint_file is not None:
            save_record(target, self.checkpoint_file)
            self._build()
            target = load_record(self.checkpoint_file)
            self.checkpoints.records[target.epoch] = target
            self.checkpoints.last_complete = target
        self.rollbacks += 1
        self.rng.seed(f"{self.scenario.seed}/rollback/{self.rollbacks}")
        self.checkpoints.rollback(target)
        self.checkpoints.next_epoch = target.epoch + 1
        self.trace(
            "rollback", epoch=target.epoch,
            pcs=[c.state.pc for c in self.clients],
            states=[r.state.to_json() for r in self.replicas],
        )
        self._start_clients()
