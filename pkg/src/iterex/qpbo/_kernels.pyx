# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled max-flow and enumeration kernels.

Mirrors ``_kernels_py`` exactly: same arguments, same tie-breaking, same
floating-point summation order.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def dinic(Py_ssize_t n, Py_ssize_t s, Py_ssize_t t,
          const cnp.int64_t[::1] head, double[::1] cap, const cnp.int64_t[::1] rev,
          const cnp.int64_t[::1] adj_start, const cnp.int64_t[::1] adj_arcs,
          double eps):
    if s == t or n == 0:
        return 0.0
    cdef cnp.int64_t[::1] level = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] it = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] path = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t qh, qt, u, v, k, a, depth, i
    cdef bint advanced
    cdef double total = 0.0, push
    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        qh = 0
        qt = 0
        queue[qt] = s
        qt += 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for k in range(adj_start[u], adj_start[u + 1]):
                a = adj_arcs[k]
                v = head[a]
                if level[v] < 0 and cap[a] > eps:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = adj_start[i]
        while True:
            depth = 0
            u = s
            while u != t:
                advanced = False
                while it[u] < adj_start[u + 1]:
                    a = adj_arcs[it[u]]
                    v = head[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        path[depth] = a
                        depth += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        break
                    level[u] = -1
                    depth -= 1
                    a = path[depth]
                    u = head[rev[a]]
                    it[u] += 1
            if u != t:
                break
            push = cap[path[0]]
            for i in range(1, depth):
                if cap[path[i]] < push:
                    push = cap[path[i]]
            for i in range(depth):
                a = path[i]
                cap[a] -= push
                cap[rev[a]] += push
            total += push
    return total


def reachable(Py_ssize_t n, Py_ssize_t s, const cnp.int64_t[::1] head,
              const double[::1] cap, const cnp.int64_t[::1] adj_start,
              const cnp.int64_t[::1] adj_arcs, double eps):
    out = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return out
    cdef cnp.uint8_t[::1] seen = out
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t qh = 0, qt = 1, u, v, k, a
    seen[s] = 1
    queue[0] = s
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(adj_start[u], adj_start[u + 1]):
            a = adj_arcs[k]
            v = head[a]
            if not seen[v] and cap[a] > eps:
                seen[v] = 1
                queue[qt] = v
                qt += 1
    return out


cdef inline double _energy(long long code, Py_ssize_t n, const double[:, ::1] unary,
                           const cnp.int64_t[::1] pi, const cnp.int64_t[::1] pj,
                           const double[:, ::1] tables, double constant,
                           cnp.uint8_t[::1] x) nogil:
    cdef Py_ssize_t k, m
    cdef double e = constant
    for k in range(n):
        x[k] = (code >> (n - 1 - k)) & 1
        e += unary[k, x[k]]
    for m in range(pi.shape[0]):
        e += tables[m, 2 * x[pi[m]] + x[pj[m]]]
    return e


def enumerate_min(Py_ssize_t n, const double[:, ::1] unary,
                  const cnp.int64_t[::1] pi, const cnp.int64_t[::1] pj,
                  const double[:, ::1] tables, double constant, double tol):
    if n == 0:
        return np.zeros(0, dtype=np.uint8), float(constant)
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] x = out
    cdef long long code, total = 1LL << n
    cdef double e, best = np.inf
    with nogil:
        for code in range(total):
            e = _energy(code, n, unary, pi, pj, tables, constant, x)
            if e < best:
                best = e
        for code in range(total):
            e = _energy(code, n, unary, pi, pj, tables, constant, x)
            if e <= best + tol:
                break
    return out, float(e)
