# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled serialization search; same contract as ``dsmsim.search.py_search``."""

from libc.stdint cimport uint64_t, int32_t
from libc.string cimport memcpy
from libcpp.string cimport string
from libcpp.unordered_set cimport unordered_set
from libcpp.vector cimport vector

cdef enum:
    MAX_OPS = 64


cdef class _Searcher:
    cdef int n, n_vars
    cdef uint64_t full
    cdef vector[uint64_t] req
    cdef vector[int32_t] var, cls, mem, reads, writes, order
    cdef vector[char] keybuf
    cdef unordered_set[string] failed
    cdef long explored

    def __cinit__(self, req, is_read, var, cls, int n_vars):
        cdef int i
        self.n = len(req)
        self.n_vars = n_vars
        self.full = (<uint64_t>1 << self.n) - 1 if self.n < 64 else <uint64_t>0xFFFFFFFFFFFFFFFF
        for i in range(self.n):
            self.req.push_back(<uint64_t>req[i])
            self.var.push_back(var[i])
            self.cls.push_back(cls[i])
            if is_read[i]:
                self.reads.push_back(i)
            else:
                self.writes.push_back(i)
        self.mem.resize(n_vars, 0)
        self.keybuf.resize(8 + 4 * n_vars)
        self.explored = 0

    cdef string _key(self, uint64_t done):
        memcpy(self.keybuf.data(), &done, 8)
        if self.n_vars:
            memcpy(self.keybuf.data() + 8, self.mem.data(), 4 * self.n_vars)
        return string(self.keybuf.data(), self.keybuf.size())

    cdef bint dfs(self, uint64_t done):
        cdef int i, k, v, taken = 0
        cdef int32_t old
        cdef bint progress = True
        cdef string key
        self.explored += 1
        while progress:
            progress = False
            for k in range(<int>self.reads.size()):
                i = self.reads[k]
                if (done >> i) & 1:
                    continue
                if self.req[i] & ~done:
                    continue
                if self.mem[self.var[i]] != self.cls[i]:
                    continue
                done |= (<uint64_t>1 << i)
                self.order.push_back(i)
                taken += 1
                progress = True
        if done == self.full:
            return True
        key = self._key(done)
        if self.failed.count(key) == 0:
            for k in range(<int>self.writes.size()):
                i = self.writes[k]
                if (done >> i) & 1 or (self.req[i] & ~done):
                    continue
                v = self.var[i]
                old = self.mem[v]
                self.mem[v] = self.cls[i]
                self.order.push_back(i)
                if self.dfs(done | (<uint64_t>1 << i)):
                    return True
                self.order.pop_back()
                self.mem[v] = old
            self.failed.insert(key)
        for k in range(taken):
            self.order.pop_back()
        return False


def search(req, is_read, var, cls, int n_vars):
    cdef int n = len(req)
    if n > MAX_OPS:
        raise ValueError(f"at most {MAX_OPS} operations, got {n}")
    for i in range(n):
        if is_read[i] and cls[i] < 0:
            return None, 0
    s = _Searcher(req, is_read, var, cls, n_vars)
    ok = s.dfs(0)
    explored = s.explored
    if not ok:
        return None, explored
    return [s.order[i] for i in range(<int>s.order.size())], explored
