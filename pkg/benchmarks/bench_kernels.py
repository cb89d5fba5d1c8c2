"""Compare the compiled and pure-Python QPBO kernels.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each case runs once per backend on identical inputs; results must agree
before timings are reported.
"""

import argparse
import time

import numpy as np

from iterex.qpbo import FlowNetwork, PseudoBooleanFunction, _kernels_py
from iterex.qpbo.core import EPS

try:
    from iterex.qpbo import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def random_pbf(rng, n, density):
    unary = np.zeros((n, 2))
    unary[:, 1] = rng.uniform(-2, 2, n)
    pairs = {(i, j): [[0, 0], [0, rng.uniform(0, 2)]]
             for i in range(n) for j in range(i + 1, n) if rng.random() < density}
    return PseudoBooleanFunction(n, unary, pairs)


def grid_network(rng, side):
    n = side * side + 2
    net = FlowNetwork(n, n - 2, n - 1)
    for r in range(side):
        for c in range(side):
            v = r * side + c
            net.add_edge(n - 2, v, rng.uniform(0, 4))
            net.add_edge(v, n - 1, rng.uniform(0, 4))
            if c + 1 < side:
                w = rng.uniform(0, 2)
                net.add_edge(v, v + 1, w, w)
            if r + 1 < side:
                w = rng.uniform(0, 2)
                net.add_edge(v, v + side, w, w)
    return net


def flow_case(mod, net):
    head = np.asarray(net.heads, dtype=np.int64)
    cap = np.array(net.caps, dtype=np.float64)
    start, arcs = net.csr()
    value = mod.dinic(net.n, net.source, net.sink, head, cap, net.rev, start, arcs, EPS)
    side = mod.reachable(net.n, net.source, head, cap, start, arcs, EPS)
    return value, np.asarray(side).tobytes()


def enum_case(mod, f):
    pi, pj, tables = f.arrays()
    x, e = mod.enumerate_min(f.n, np.ascontiguousarray(f.unary), pi, pj, tables, f.constant, 1e-12)
    return np.asarray(x).tobytes(), e


def timed(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller cases")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    sides = (10, 20) if args.quick else (20, 40, 60)
    sizes = (12, 16) if args.quick else (14, 18, 20)
    cases = [(f"max-flow grid {s}x{s}", flow_case, grid_network(rng, s)) for s in sides]
    cases += [(f"enumerate n={n}", enum_case, random_pbf(rng, n, 0.5)) for n in sizes]
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"{'case':<22}" + "".join(f"{name:>12}" for name, _ in backends) + "     speedup")
    for label, fn, data in cases:
        times, outs = [], []
        for _, mod in backends:
            t, out = timed(lambda: fn(mod, data), args.repeat)
            times.append(t)
            outs.append(out)
        if any(o != outs[0] for o in outs[1:]):
            raise SystemExit(f"{label}: backends disagree")
        speed = f"{times[0] / times[1]:10.1f}x" if len(times) > 1 else "         -"
        print(f"{label:<22}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
