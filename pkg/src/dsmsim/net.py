"""Deterministic discrete-event network.

Every message travels over a FIFO channel keyed by (kind, src, dst). Latency is
drawn from a seeded PRNG unless pinned per link. Three multicasts are layered on
the channels:

* total order: senders forward to a fixed sequencer at replica 0, which stamps a
  global sequence number and relays to every replica (including itself);
* causal: vector-clock holdback; the transport vector counts every causal
  multicast (writes and markers), the sender delivers to itself at send time;
* FIFO: per-sender counters, self-delivery at send time.
"""

from __future__ import annotations

import heapq
import random
from typing import Callable, NamedTuple, Optional

from .types import Message


class SimEvent(NamedTuple):
    fire_time: int
    seq: int
    action: tuple


class EventQueue:
    """Min-heap of events popped in (fire_time, seq) order."""

    def __init__(self):
        self._heap: list = []
        self.seq = 0
        self.now = 0

    def push(self, fire_time: int, action: tuple) -> None:
        heapq.heappush(self._heap, SimEvent(fire_time, self.seq, action))
        self.seq += 1

    def schedule(self, delay: int, action: tuple) -> None:
        self.push(self.now + delay, action)

    def pop(self) -> SimEvent:
        ev = heapq.heappop(self._heap)
        self.now = ev.fire_time
        return ev

    def discard(self, pred: Callable[[tuple], bool]) -> int:
        kept = [ev for ev in self._heap if not pred(ev.action)]
        dropped = len(self._heap) - len(kept)
        heapq.heapify(kept)
        self._heap = kept
        return dropped

    def clear(self) -> None:
        self._heap.clear()

    def __len__(self) -> int:
        return len(self._heap)


SEQUENCER = 0


class Network:
    def __init__(
        self,
        n: int,
        queue: EventQueue,
        rng: random.Random,
        max_latency: int = 4,
        link_latency: Optional[dict] = None,
        deliver: Optional[Callable[[int, Message, str], None]] = None,
        to_client_cb: Optional[Callable[[int, Message], None]] = None,
        to_replica_cb: Optional[Callable[[int, Message], None]] = None,
    ):
        self.n = n
        self.queue = queue
        self.rng = rng
        self.max_latency = max_latency
        self.link_latency = dict(link_latency or {})
        self._deliver = deliver
        self._to_client_cb = to_client_cb
        self._to_replica_cb = to_replica_cb
        self._reset_state()

    def _reset_state(self) -> None:
        # ChannelState: last scheduled arrival per channel keeps FIFO order.
        self._last_arrival: dict = {}
        self.in_flight: dict = {}
        # SequencerState
        self.next_seq_no = 0
        self._to_expected = [0] * self.n
        self._to_held: list = [dict() for _ in range(self.n)]
        # causal transport
        self.tvc = [tuple([0] * self.n) for _ in range(self.n)]
        self._causal_held: list = [[] for _ in range(self.n)]
        # fifo transport
        self._fifo_sent = [0] * self.n
        self._fifo_expected = [[0] * self.n for _ in range(self.n)]
        self._fifo_held: list = [dict() for _ in range(self.n)]
        self.delivered = 0

    # -- channels -----------------------------------------------------------

    def latency(self, src: int, dst: int, kind: str = "net") -> int:
        if kind == "net":
            pinned = self.link_latency.get((src, dst))
            if pinned is not None:
                return pinned
        return self.rng.randint(1, self.max_latency)

    def _send(self, kind: str, src: int, dst: int, envelope: tuple) -> None:
        key = (kind, src, dst)
        arrival = max(self.queue.now + self.latency(src, dst, kind), self._last_arrival.get(key, 0))
        self._last_arrival[key] = arrival
        self.in_flight[key] = self.in_flight.get(key, 0) + 1
        self.queue.push(arrival, ("net", kind, src, dst, envelope))

    def arrive(self, kind: str, src: int, dst: int, envelope: tuple) -> None:
        key = (kind, src, dst)
        self.in_flight[key] -= 1
        if kind == "client":
            self._to_client_cb(dst, envelope[0])
        elif kind == "replica":
            self._to_replica_cb(dst, envelope[0])
        else:
            self._arrive_replica(src, dst, envelope)

    def pending(self) -> int:
        return sum(self.in_flight.values())

    def clear_network(self) -> int:
        """Drop every in-flight message, holdback entry and sequencer slot."""
        dropped = self.queue.discard(lambda a: a[0] == "net")
        self._reset_state()
        return dropped

    # -- node-local client channels ------------------------------------------

    def to_client(self, node: int, msg: Message) -> None:
        self._send("client", node, node, (msg,))

    def to_replica(self, node: int, msg: Message) -> None:
        self._send("replica", node, node, (msg,))

    # -- primitives ----------------------------------------------------------

    def send_p2p(self, src: int, dst: int, msg: Message) -> None:
        self._send("net", src, dst, ("p2p", msg))

    def tomcast(self, sender: int, msg: Message) -> None:
        self._send("net", sender, SEQUENCER, ("to_seq", msg))

    def comcast(self, sender: int, msg: Message) -> None:
        counts = list(self.tvc[sender])
        counts[sender] += 1
        stamp = tuple(counts)
        self.tvc[sender] = stamp
        self._hand(sender, msg, "causal")
        for j in range(self.n):
            if j != sender:
                self._send("net", sender, j, ("causal", stamp, msg))

    def fifocast(self, sender: int, msg: Message) -> None:
        k = self._fifo_sent[sender]
        self._fifo_sent[sender] = k + 1
        self._fifo_expected[sender][sender] = k + 1
        self._hand(sender, msg, "fifo")
        for j in range(self.n):
            if j != sender:
                self._send("net", sender, j, ("fifo", k, msg))

    # -- arrival and holdback ------------------------------------------------

    def _hand(self, dst: int, msg: Message, via: str) -> None:
        self.delivered += 1
        self._deliver(dst, msg, via)

    def _arrive_replica(self, src: int, dst: int, envelope: tuple) -> None:
        tag = envelope[0]
        if tag == "p2p":
            self._hand(dst, envelope[1], "p2p")
        elif tag == "to_seq":
            seq_no = self.next_seq_no
            self.next_seq_no += 1
            for j in range(self.n):
                self._send("net", SEQUENCER, j, ("tord", seq_no, envelope[1]))
        elif tag == "tord":
            self._to_held[dst][envelope[1]] = envelope[2]
            held = self._to_held[dst]
            while self._to_expected[dst] in held:
                msg = held.pop(self._to_expected[dst])
                self._to_expected[dst] += 1
                self._hand(dst, msg, "total")
        elif tag == "causal":
            self._causal_held[dst].append((src, envelope[1], envelope[2]))
            self._drain_causal(dst)
        elif tag == "fifo":
            self._fifo_held[dst][(src, envelope[1])] = envelope[2]
            expected = self._fifo_expected[src]
            while (src, expected[dst]) in self._fifo_held[dst]:
                msg = self._fifo_held[dst].pop((src, expected[dst]))
                expected[dst] += 1
                self._hand(dst, msg, "fifo")
        else:
            raise ValueError(f"unknown envelope {tag!r}")

    def causally_ready(self, local: tuple, sender: int, stamp: tuple) -> bool:
        if local[sender] != stamp[sender] - 1:
            return False
        return all(local[k] >= stamp[k] for k in range(self.n) if k != sender)

    def _drain_causal(self, dst: int) -> None:
        held = self._causal_held[dst]
        progress = True
        while progress:
            progress = False
            for idx, (src, stamp, msg) in enumerate(held):
                if self.causally_ready(self.tvc[dst], src, stamp):
                    del held[idx]
                    counts = list(self.tvc[dst])
                    counts[src] = stamp[src]
                    self.tvc[dst] = tuple(counts)
                    self._hand(dst, msg, "causal")
                    progress = True
                    break
