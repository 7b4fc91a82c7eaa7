"""Serialization search shared by the linearizability and sequential checkers.

Operations are encoded as parallel lists:

``req[i]``      bitmask of operations that must be serialized before ``i``
``is_read[i]``  read (True) or write (False)
``var[i]``      variable index
``cls[i]``      value class: what a write stores, or what a read must observe
                (class 0 is the initial value, -1 is a value no write produces)

The search returns a serialization (list of indices) or None, plus the number
of states it expanded. Reads that are enabled and match memory are scheduled
greedily: moving such a read earlier never invalidates a serialization.

The compiled twin lives in ``_csearch``; set ``DSMSIM_PURE_PYTHON=1`` to force
this implementation.
"""

from __future__ import annotations

import os
import sys

MAX_OPS = 64


def py_search(req, is_read, var, cls, n_vars):
    n = len(req)
    if n > MAX_OPS:
        raise ValueError(f"at most {MAX_OPS} operations, got {n}")
    if any(r and c < 0 for r, c in zip(is_read, cls)):
        return None, 0
    full = (1 << n) - 1
    mem = [0] * n_vars
    order = []
    failed = set()
    explored = 0
    reads = [i for i in range(n) if is_read[i]]
    writes = [i for i in range(n) if not is_read[i]]

    def dfs(done):
        nonlocal explored
        explored += 1
        taken = 0
        progress = True
        while progress:
            progress = False
            for i in reads:
                if not (done >> i) & 1 and not (req[i] & ~done) and mem[var[i]] == cls[i]:
                    done |= 1 << i
                    order.append(i)
                    taken += 1
                    progress = True
        if done == full:
            return True
        key = (done, tuple(mem))
        if key not in failed:
            for i in writes:
                if (done >> i) & 1 or req[i] & ~done:
                    continue
                v = var[i]
                old = mem[v]
                mem[v] = cls[i]
                order.append(i)
                if dfs(done | (1 << i)):
                    return True
                order.pop()
                mem[v] = old
            failed.add(key)
        if taken:
            del order[-taken:]
        return False

    limit = sys.getrecursionlimit()
    if limit < 4 * n + 100:
        sys.setrecursionlimit(4 * n + 100)
    ok = dfs(0)
    return (list(order) if ok else None), explored


try:
    from ._csearch import search as c_search
except ImportError:  # extension not built
    c_search = None

if c_search is not None and not os.environ.get("DSMSIM_PURE_PYTHON"):
    search = c_search
    BACKEND = "cython"
else:
    search = py_search
    BACKEND = "python"

BACKENDS = {"python": py_search}
if c_search is not None:
    BACKENDS["cython"] = c_search
