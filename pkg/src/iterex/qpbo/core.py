"""Quadratic pseudo-boolean minimization by roof duality.

The energy of a labeling ``x`` in ``{0, 1}^n`` is::

    E(x) = constant + sum_i unary[i][x_i] + sum_{i<j} pairwise[i, j][x_i][x_j]

:func:`solve_roof_duality` builds the doubled graph in which every variable
``i`` has a literal node and a complement node, minimizes the (submodular)
doubled energy with one max-flow, and keeps the variables whose two copies
agree. The result is a persistent partial labeling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _backend

UNLABELED = -1
EPS = 1e-12
MAX_EXHAUSTIVE = 25
EXACT_COMPLETION_LIMIT = 20


class ProblemTooLarge(ValueError):
    pass


@dataclass
class PseudoBooleanFunction:
    n: int
    unary: np.ndarray = None
    pairwise: dict = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        if self.unary is None:
            self.unary = np.zeros((self.n, 2))
        self.unary = np.array(self.unary, dtype=np.float64).reshape(self.n, 2)
        tables = {}
        for (i, j), tab in self.pairwise.items():
            tab = np.array(tab, dtype=np.float64).reshape(2, 2)
            if i > j:
                i, j, tab = j, i, tab.T
            if not 0 <= i < j < self.n:
                raise ValueError(f"bad pairwise key ({i}, {j}) for n={self.n}")
            tables[(i, j)] = tables[(i, j)] + tab if (i, j) in tables else tab
        self.pairwise = dict(sorted(tables.items()))
        self.constant = float(self.constant)
        if not (np.all(np.isfinite(self.unary)) and np.isfinite(self.constant)
                and all(np.all(np.isfinite(t)) for t in self.pairwise.values())):
            raise ValueError("non-finite coefficient")

    @classmethod
    def from_terms(cls, n: int, linear: Mapping[int, float] = (),
                   quadratic: Mapping[tuple[int, int], float] = (),
                   constant: float = 0.0) -> "PseudoBooleanFunction":
        """Build from ``theta_i(1)`` values and ``theta_ij(1, 1)`` values."""
        unary = np.zeros((n, 2))
        for i, v in dict(linear).items():
            unary[i, 1] += v
        pairwise = {}
        for (i, j), v in dict(quadratic).items():
            pairwise[(i, j)] = [[0.0, 0.0], [0.0, v]]
        return cls(n, unary, pairwise, constant)

    def arrays(self):
        """(pi, pj, tables) with tables flattened to [00, 01, 10, 11] rows."""
        m = len(self.pairwise)
        pi = np.fromiter((k[0] for k in self.pairwise), dtype=np.int64, count=m)
        pj = np.fromiter((k[1] for k in self.pairwise), dtype=np.int64, count=m)
        tables = np.array([t.ravel() for t in self.pairwise.values()], dtype=np.float64).reshape(m, 4)
        return pi, pj, tables

    def is_submodular(self) -> bool:
        return all(t[0, 0] + t[1, 1] <= t[0, 1] + t[1, 0] for t in self.pairwise.values())

    def condition(self, fixed: Mapping[int, int]) -> tuple["PseudoBooleanFunction", list[int]]:
        """Restrict to the free variables, folding fixed ones into lower-order terms.

        Returns the reduced function and the original index of each free variable.
        """
        free = [i for i in range(self.n) if i not in fixed]
        pos = {v: k for k, v in enumerate(free)}
        unary = self.unary[free].copy() if free else np.zeros((0, 2))
        const = self.constant + sum(self.unary[i, x] for i, x in fixed.items())
        pairwise = {}
        for (i, j), t in self.pairwise.items():
            if i in fixed and j in fixed:
                const += t[fixed[i], fixed[j]]
            elif i in fixed:
                unary[pos[j]] += t[fixed[i], :]
            elif j in fixed:
                unary[pos[i]] += t[:, fixed[j]]
            else:
                pairwise[(pos[i], pos[j])] = t
        return PseudoBooleanFunction(len(free), unary, pairwise, const), free


def energy(f: PseudoBooleanFunction, x: Sequence[int]) -> float:
    x = list(x)
    if len(x) != f.n:
        raise ValueError(f"labeling has length {len(x)}, expected {f.n}")
    e = f.constant
    for i in range(f.n):
        e += f.unary[i, x[i]]
    for (i, j), t in f.pairwise.items():
        e += t[x[i], x[j]]
    return float(e)


def exhaustive_solve(f: PseudoBooleanFunction, tol: float = EPS) -> tuple[tuple[int, ...], float]:
    """Brute-force minimum; ties go to the lexicographically smallest labeling."""
    if f.n > MAX_EXHAUSTIVE:
        raise ProblemTooLarge(f"n={f.n} exceeds exhaustive limit {MAX_EXHAUSTIVE}")
    pi, pj, tables = f.arrays()
    x, e = _backend.enumerate_min(f.n, np.ascontiguousarray(f.unary), pi, pj,
                                  np.ascontiguousarray(tables), f.constant, tol)
    return tuple(int(v) for v in x), float(e)


class FlowNetwork:
    """Directed network with paired residual arcs.

    Arc ``2k`` is the forward arc of edge ``k`` and ``2k + 1`` its reverse.
    """

    def __init__(self, n_nodes: int, source: int, sink: int):
        self.n = n_nodes
        self.source = source
        self.sink = sink
        self.tails: list[int] = []
        self.heads: list[int] = []
        self.caps: list[float] = []

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be non-negative")
        k = len(self.heads)
        self.tails += [u, v]
        self.heads += [v, u]
        self.caps += [float(cap), float(rev_cap)]
        return k

    @property
    def rev(self) -> np.ndarray:
        return np.arange(len(self.heads), dtype=np.int64) ^ 1

    def csr(self):
        tails = np.asarray(self.tails, dtype=np.int64)
        order = np.argsort(tails, kind="stable").astype(np.int64)
        start = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(start, tails + 1, 1)
        return np.cumsum(start).astype(np.int64), order

    def to_edge_list(self) -> str:
        lines = [f"# nodes={self.n} source={self.source} sink={self.sink}"]
        for k in range(0, len(self.heads), 2):
            lines.append(f"{self.tails[k]} {self.heads[k]} {self.caps[k]!r} {self.caps[k + 1]!r}")
        return "\n".join(lines) + "\n"


@dataclass
class FlowResult:
    value: float
    source_side: np.ndarray
    residual: np.ndarray

    def cut_capacity(self, net: FlowNetwork) -> float:
        caps = np.asarray(net.caps)
        side = self.source_side
        tails = np.asarray(net.tails, dtype=np.int64)
        heads = np.asarray(net.heads, dtype=np.int64)
        crossing = (side[tails] == 1) & (side[heads] == 0)
        return float(caps[crossing].sum())


def max_flow(net: FlowNetwork, eps: float = EPS) -> FlowResult:
    """Dinic max-flow; the cut is the set reachable from the source in the residual."""
    if net.n == 0:
        return FlowResult(0.0, np.zeros(0, dtype=np.uint8), np.zeros(0))
    head = np.asarray(net.heads, dtype=np.int64)
    cap = np.array(net.caps, dtype=np.float64)
    start, arcs = net.csr()
    value = _backend.dinic(net.n, net.source, net.sink, head, cap, net.rev, start, arcs, eps)
    side = _backend.reachable(net.n, net.source, head, cap, start, arcs, eps)
    return FlowResult(float(value), np.asarray(side, dtype=np.uint8), cap)


class _SubmodularBuilder:
    """Accumulates a submodular energy over ``m`` binary nodes into a network.

    Label 0 = source side, 1 = sink side.
    """

    def __init__(self, m: int):
        self.m = m
        self.lin = np.zeros(m)
        self.const = 0.0
        self.edges: list[tuple[int, int, float]] = []

    def add_unary(self, i, e0, e1):
        self.const += e0
        self.lin[i] += e1 - e0

    def add_pair(self, i, j, a, b, c, d):
        # a + (c - a) x_i + (d - c) x_j + (b + c - a - d) (1 - x_i) x_j
        w = b + c - a - d
        if w < -1e-9:
            raise AssertionError(f"non-submodular term {w}")
        self.const += a
        self.lin[i] += c - a
        self.lin[j] += d - c
        if w > 0:
            self.edges.append((i, j, w))

    def network(self) -> FlowNetwork:
        s, t = self.m, self.m + 1
        net = FlowNetwork(self.m + 2, s, t)
        for i in range(self.m):
            c = self.lin[i]
            if c > 0:
                net.add_edge(s, i, c)
            elif c < 0:
                net.add_edge(i, t, -c)
        for i, j, w in self.edges:
            net.add_edge(i, j, w)
        return net


def roof_dual_network(f: PseudoBooleanFunction) -> FlowNetwork:
    """Doubled network: node ``i`` is x_i, node ``n + i`` is the complement of x_i.

    The doubled energy is ``E(x) + E(1 - xbar)`` rearranged so that every
    term is submodular; it equals ``2 E(x)`` whenever ``xbar = 1 - x``.
    """
    n = f.n
    b = _SubmodularBuilder(2 * n)
    for i in range(n):
        u0, u1 = f.unary[i]
        b.add_unary(i, u0, u1)
        b.add_unary(n + i, u1, u0)
    for (i, j), t in f.pairwise.items():
        a, bb, c, d = t.ravel()
        if a + d <= bb + c:
            b.add_pair(i, j, a, bb, c, d)
            # t(1 - xbar_i, 1 - xbar_j)
            b.add_pair(n + i, n + j, d, c, bb, a)
        else:
            # t(x_i, 1 - xbar_j) and t(1 - xbar_i, x_j)
            b.add_pair(i, n + j, bb, a, d, c)
            b.add_pair(n + i, j, c, d, a, bb)
    return b.network()


def solve_roof_duality(f: PseudoBooleanFunction, dump=None) -> np.ndarray:
    """Persistent partial labeling; entries are 0, 1 or ``UNLABELED``.

    ``dump`` may be a writable text stream that receives the flow network.
    """
    if f.n == 0:
        return np.zeros(0, dtype=np.int8)
    net = roof_dual_network(f)
    if dump is not None:
        dump.write(net.to_edge_list())
    res = max_flow(net)
    # source side means label 0
    y = 1 - res.source_side[: 2 * f.n].astype(np.int8)
    x, xbar = y[: f.n], y[f.n:]
    return np.where(x != xbar, x, UNLABELED).astype(np.int8)


def complete_labeling(f: PseudoBooleanFunction, partial: Sequence[int],
                      exact_limit: int = EXACT_COMPLETION_LIMIT) -> tuple[int, ...]:
    """Fill in unlabeled nodes.

    Up to ``exact_limit`` unlabeled nodes are optimized exhaustively given the
    labeled ones. Beyond that, nodes are visited by decreasing unary
    magnitude and each takes the label with lower energy given the nodes
    already assigned.
    """
    partial = [int(v) for v in partial]
    fixed = {i: v for i, v in enumerate(partial) if v != UNLABELED}
    if len(fixed) == f.n:
        return tuple(partial)
    out = list(partial)
    if f.n - len(fixed) <= exact_limit:
        sub, free = f.condition(fixed)
        xs, _ = exhaustive_solve(sub)
        for k, i in enumerate(free):
            out[i] = xs[k]
        return tuple(out)

    neighbors: dict[int, list[tuple[int, np.ndarray, bool]]] = {i: [] for i in range(f.n)}
    for (i, j), t in f.pairwise.items():
        neighbors[i].append((j, t, True))
        neighbors[j].append((i, t, False))
    free = [i for i in range(f.n) if i not in fixed]
    free.sort(key=lambda i: (-abs(f.unary[i, 0] - f.unary[i, 1]), i))
    for i in free:
        cost = f.unary[i].copy()
        for j, t, i_first in neighbors[i]:
            if out[j] == UNLABELED:
                continue
            cost += t[:, out[j]] if i_first else t[out[j], :]
        out[i] = 1 if cost[1] < cost[0] else 0
    return tuple(out)


def minimize(f: PseudoBooleanFunction) -> tuple[tuple[int, ...], float]:
    x = complete_labeling(f, solve_roof_duality(f))
    return x, energy(f, x)


def brute_force_labelings(n: int):
    return itertools.product((0, 1), repeat=n)
