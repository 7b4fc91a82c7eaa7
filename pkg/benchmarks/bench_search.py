"""Time the serialization search with the compiled and pure-Python backends.

Workload: histories from seeded runs plus adversarial ones (many concurrent
writes to one variable, reads that pin a late order) that force deep search.

    python3 benchmarks/bench_search.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import random
import statistics
import time

from dsmsim import search
from dsmsim.checkers import History, _encode
from dsmsim.engines import EngineKind
from dsmsim.harness import run
from dsmsim.scenario import generate_scenario
from dsmsim.types import READ, WRITE, Operation, OperationRecord


def adversarial(n_writers: int, seed: int) -> History:
    """All writes overlap; each reader sees a different write, so most orders fail late."""
    rng = random.Random(seed)
    recs = []
    for c in range(n_writers):
        recs.append(OperationRecord(c, Operation(WRITE, "X", c + 1, 0), 0, 100))
    values = list(range(1, n_writers + 1))
    rng.shuffle(values)
    for k, v in enumerate(values[:4]):
        c = n_writers + k
        recs.append(OperationRecord(c, Operation(READ, "X", None, 0), 0, 100, v))
        recs.append(OperationRecord(c, Operation(READ, "X", None, 1), 101, 102, values[(k + 1) % 4]))
    return History(recs)


def workloads() -> list:
    out = []
    for seed in range(40):
        rep = run(generate_scenario(EngineKind.SEQUENTIAL, 4, seed, total_ops=14))
        out.append(rep.effective_history)
    for seed in range(6):
        out.append(adversarial(7, seed))
    return out


def bench(fn, encoded, repeat: int) -> tuple:
    times = []
    explored = 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        explored = 0
        for args in encoded:
            explored += fn(*args)[1]
        times.append(time.perf_counter() - t0)
    return statistics.median(times), explored


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    histories = workloads()
    encoded = []
    for h in histories:
        recs = [r for r in h.shared() if r.complete]
        encoded.append(_encode(recs, realtime=False))
        encoded.append(_encode(recs, realtime=True))
    print(f"{len(encoded)} searches over {len(histories)} histories (<= {max(len(h) for h in histories)} ops)")
    results = {}
    for name, fn in sorted(search.BACKENDS.items()):
        secs, explored = bench(fn, encoded, args.repeat)
        results[name] = secs
        print(f"{name:<8} {secs * 1e3:9.2f} ms  ({explored} states)")
    if "cython" in results:
        print(f"speedup  {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
