import itertools

import numpy as np
import pytest

from iterex.qpbo import _backend, _kernels_py


def _backends():
    names = ["python"]
    try:
        from iterex.qpbo import _kernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


@pytest.fixture(params=_backends())
def kernel_backend(request, monkeypatch):
    """Run the test once per available kernel implementation."""
    if request.param == "python":
        mod = _kernels_py
    else:
        from iterex.qpbo import _kernels as mod
    for name in ("dinic", "reachable", "enumerate_min"):
        monkeypatch.setattr(_backend, name, getattr(mod, name))
    return request.param


def brute_energy(f, x):
    e = f.constant + sum(f.unary[i, x[i]] for i in range(f.n))
    for (i, j), t in f.pairwise.items():
        e += t[x[i], x[j]]
    return e


def brute_min(f):
    """Independent oracle: itertools enumeration, no kernel code."""
    best = None
    for x in itertools.product((0, 1), repeat=f.n):
        e = brute_energy(f, x)
        if best is None or e < best[1] - 1e-12:
            best = (x, e)
    return best


def random_pbf(rng, n, pair_prob=0.6, submodular=False):
    from iterex.qpbo import PseudoBooleanFunction

    unary = np.zeros((n, 2))
    unary[:, 1] = rng.uniform(-2, 2, size=n)
    pairs = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < pair_prob:
                if submodular:
                    c = rng.uniform(0, 2)
                    pairs[(i, j)] = [[0, c], [c, 0]]
                else:
                    pairs[(i, j)] = [[0, 0], [0, rng.uniform(0, 2)]]
    return PseudoBooleanFunction(n, unary, pairs)


# ---------------------------------------------------------------- neural

MICRO_SENTENCES = [
    ("m1", "john met mary in paris .", [("john", "met", "mary"), ("john", "met mary in", "paris")]),
    ("m2", "bob sold the car and bought a bike .", [("bob", "sold", "the car"),
                                                   ("bob", "bought", "a bike")]),
    ("m3", "zed runs .", [("zed", "runs", "")]),
]

SMALL_DIMS = dict(d_emb=5, d_hid=4, d_dec=6, d_att=3, init_scale=0.5)


def micro_instances():
    from iterex.train_builder import build_instances
    from iterex.tuples import Extraction, Sentence

    out = []
    for sid, text, tuples in MICRO_SENTENCES:
        out += build_instances(Sentence.from_text(sid, text),
                               [Extraction.from_strings(*t) for t in tuples])
    return out


def finite_difference_errors(params, loss_fn, grads, h=1e-6):
    """Relative error ||num - ana|| / (||num|| + ||ana||) per parameter group."""
    errs = {}
    for k, p in params.items():
        num = np.zeros_like(p)
        for ix in np.ndindex(p.shape):
            old = p[ix]
            p[ix] = old + h
            up = loss_fn()
            p[ix] = old - h
            down = loss_fn()
            p[ix] = old
            num[ix] = (up - down) / (2 * h)
        denom = np.linalg.norm(num) + np.linalg.norm(grads[k])
        errs[k] = float(np.linalg.norm(num - grads[k]) / denom) if denom > 0 else 0.0
    return errs


def gradient_check():
    """Analytic vs numeric gradients on the micro corpus with small random weights."""
    from iterex.neural.model import ModelConfig, init_params, loss_and_grads, make_batch
    from iterex.neural.vocab import Vocab

    inst = micro_instances()
    cfg = ModelConfig(**SMALL_DIMS)
    vocab = Vocab.build([(*i.input, *i.target) for i in inst], 2)
    V = len(vocab)
    p = init_params(cfg, V, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for k in p:  # non-zero biases so every term is exercised
        p[k] += rng.uniform(-0.3, 0.3, p[k].shape)
    batch = make_batch(vocab, [(i.input, i.target) for i in inst])
    _, grads, _ = loss_and_grads(p, batch, cfg, V)
    return finite_difference_errors(
        p, lambda: loss_and_grads(p, batch, cfg, V, need_grads=False)[0], grads)


class ToyRun:
    """The toy model trained once per session, with its timing and decodes."""

    def __init__(self):
        import time

        from iterex.neural import ModelConfig, Seq2SeqExtractor
        from iterex.synthetic import toy_corpus
        from iterex.train_builder import build_corpus

        t0 = time.perf_counter()
        self.corpus = toy_corpus()
        self.instances = build_corpus(self.corpus)
        self.model = Seq2SeqExtractor.from_instances(self.instances, ModelConfig(epochs=120))
        self.train_result = self.model.train(self.instances)
        self.results = [self.model.generate_extractions(s) for s, _ in self.corpus]
        self.seconds = time.perf_counter() - t0


_TOY = []


@pytest.fixture(scope="session")
def toy_run():
    if not _TOY:
        _TOY.append(ToyRun())
    return _TOY[0]
