"""Pure-Python kernels; same signatures as the compiled ``_kernels`` module.

Arcs are stored in flat arrays: ``head[a]`` is the arc's target node,
``cap[a]`` its residual capacity (mutated in place) and ``rev[a]`` the index
of the paired reverse arc. ``adj_start``/``adj_arcs`` form a CSR index of the
outgoing arcs of each node.
"""

from collections import deque

import numpy as np


def dinic(n, s, t, head, cap, rev, adj_start, adj_arcs, eps):
    if s == t or n == 0:
        return 0.0
    head = head.tolist()
    res = cap.tolist()
    rev = rev.tolist()
    start = adj_start.tolist()
    arcs = adj_arcs.tolist()
    total = 0.0
    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for k in range(start[u], start[u + 1]):
                a = arcs[k]
                v = head[a]
                if level[v] < 0 and res[a] > eps:
                    level[v] = level[u] + 1
                    q.append(v)
        if level[t] < 0:
            break
        it = start[:-1]
        # iterative DFS for blocking flow, one augmenting path at a time
        while True:
            path = []
            u = s
            while u != t:
                advanced = False
                while it[u] < start[u + 1]:
                    a = arcs[it[u]]
                    v = head[a]
                    if res[a] > eps and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        break
                    level[u] = -1
                    a = path.pop()
                    u = head[rev[a]]
                    it[u] += 1
            if u != t:
                break
            push = min(res[a] for a in path)
            for a in path:
                res[a] -= push
                res[rev[a]] += push
            total += push
    cap[:] = res
    return total


def reachable(n, s, head, cap, adj_start, adj_arcs, eps):
    seen = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return seen
    seen[s] = 1
    q = deque([s])
    while q:
        u = q.popleft()
        for k in range(adj_start[u], adj_start[u + 1]):
            a = adj_arcs[k]
            v = head[a]
            if not seen[v] and cap[a] > eps:
                seen[v] = 1
                q.append(v)
    return seen


def _energies(codes, n, unary, pi, pj, tables, constant):
    # bit (n-1-k) of the code is variable k, so increasing codes are lexicographic
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    x = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.intp)
    e = np.full(len(codes), constant, dtype=np.float64)
    for k in range(n):
        e += unary[k, x[:, k]]
    for m in range(len(pi)):
        e += tables[m, 2 * x[:, pi[m]] + x[:, pj[m]]]
    return e


def enumerate_min(n, unary, pi, pj, tables, constant, tol):
    """Minimum over all 2**n labelings; lexicographically smallest among ties."""
    if n == 0:
        return np.zeros(0, dtype=np.uint8), float(constant)
    chunk = 1 << 16
    total = 1 << n
    best_e = np.inf
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        best_e = min(best_e, float(_energies(codes, n, unary, pi, pj, tables, constant).min()))
    # second pass: first labeling within tol of the minimum
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        e = _energies(codes, n, unary, pi, pj, tables, constant)
        hits = np.flatnonzero(e <= best_e + tol)
        if len(hits):
            code = int(codes[hits[0]])
            x = np.array([(code >> (n - 1 - k)) & 1 for k in range(n)], dtype=np.uint8)
            return x, float(e[hits[0]])
    raise AssertionError("unreachable")
