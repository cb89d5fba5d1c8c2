"""Score-and-filter aggregation of pooled extractions.

Each pooled extraction gets a score ``f``; pairs are penalized by their
ROUGE-2 similarity ``R``. The kept subset ``S`` maximizes::

    sum_{i in S} f[i] - sum_{j < k in S} R[j, k]

which is minimized as a quadratic pseudo-boolean function with roof duality.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .ingest import ExtractionPool
from .qpbo import PseudoBooleanFunction, complete_labeling, solve_roof_duality
from .tuples import Extraction, Sentence

log = logging.getLogger(__name__)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge2(a: Sequence[str], b: Sequence[str]) -> float:
    """Symmetric bigram F1 with clipped counts; unigram F1 if either side is shorter than 2."""
    n = 2 if len(a) >= 2 and len(b) >= 2 else 1
    ga, gb = _ngrams(a, n), _ngrams(b, n)
    total_a, total_b = sum(ga.values()), sum(gb.values())
    if not total_a or not total_b:
        return 0.0
    overlap = sum((ga & gb).values())
    p, r = overlap / total_a, overlap / total_b
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


class Scorer(Protocol):
    def score(self, sentence: Sentence, extraction: Extraction) -> float: ...


class RankScorer:
    """Rank-normalized source confidence: rank ``r`` of ``m`` within its source scores ``1 - r/(m+1)``."""

    def __init__(self, pools: Sequence[ExtractionPool]):
        self._scores: dict[tuple[str, Extraction], float] = {}
        for pool in pools:
            for src in pool.sources():
                exts = pool.by_source(src)
                m = len(exts)
                for r, e in enumerate(exts, 1):
                    self._scores[(pool.sentence.id, e)] = 1.0 - r / (m + 1)

    def score(self, sentence, extraction):
        return self._scores[(sentence.id, extraction)]


class ExternalScorer:
    """Scores read from a ``sentence_id, arg1, rel, arg2, score`` TSV."""

    def __init__(self, scores: Mapping[tuple[str, Extraction], float]):
        self._scores = dict(scores)

    @classmethod
    def from_file(cls, path) -> "ExternalScorer":
        scores = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                cols = line.split("\t")
                if len(cols) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(cols)}")
                sid, a1, rel, a2, s = cols
                e = Extraction.from_strings(a1, rel, a2)
                scores[(sid, e)] = min(1.0, max(0.0, float(s)))
        return cls(scores)

    def score(self, sentence, extraction):
        return self._scores[(sentence.id, extraction)]


class ModelScorer:
    """Confidence of a trained seq2seq model when forced to emit the extraction."""

    def __init__(self, model):
        self.model = model

    def score(self, sentence, extraction):
        return self.model.score_extraction(sentence, extraction)


@dataclass
class RedundancyGraph:
    nodes: list[Extraction]
    f: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        n = len(self.nodes)
        if self.f.shape != (n,) or self.R.shape != (n, n):
            raise ValueError("graph shapes do not match node count")
        if not np.array_equal(self.R, self.R.T) or np.any(np.diag(self.R) != 0):
            raise ValueError("R must be symmetric with zero diagonal")
        if np.any(self.R < 0) or np.any(self.R > 1):
            raise ValueError("R entries must lie in [0, 1]")

    def objective(self, selected: Sequence[int]) -> float:
        return subset_objective(self.f, self.R, selected)


def subset_objective(f, R, selected: Sequence[int]) -> float:
    f, R = np.asarray(f, dtype=np.float64), np.asarray(R, dtype=np.float64)
    sel = sorted(selected)
    total = float(sum(f[i] for i in sel))
    for a in range(len(sel)):
        for b in range(a + 1, len(sel)):
            total -= float(R[sel[a], sel[b]])
    return total


@dataclass
class GraphWarnings:
    messages: list[str] = field(default_factory=list)


def build_graph(pool: ExtractionPool, scorer: Scorer,
                warnings: Optional[GraphWarnings] = None) -> RedundancyGraph:
    nodes = list(pool.extractions)
    n = len(nodes)
    f = np.zeros(n)
    for i, e in enumerate(nodes):
        try:
            f[i] = scorer.score(pool.sentence, e)
        except Exception as exc:  # scorer failure zeroes the node
            msg = f"{pool.sentence.id}: scorer failed on {e}: {exc!r}"
            log.warning(msg)
            if warnings is not None:
                warnings.messages.append(msg)
    words = [e.words() for e in nodes]
    R = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            R[j, k] = R[k, j] = rouge2(words[j], words[k])
    return RedundancyGraph(nodes, f, R)


def to_pbf(f, R) -> PseudoBooleanFunction:
    """Negate the objective: unary ``theta_i(1) = -f[i]``, pairwise ``theta_jk(1,1) = R[j,k]``."""
    n = len(f)
    linear = {i: -float(f[i]) for i in range(n)}
    quad = {(j, k): float(R[j, k]) for j in range(n) for k in range(j + 1, n) if R[j, k] != 0}
    return PseudoBooleanFunction.from_terms(n, linear, quad)


def select_indices(f, R) -> list[int]:
    """Indices of an optimal subset, in increasing order.

    Any selected node whose marginal gain is not strictly positive is dropped
    afterwards, which keeps the objective optimal and excludes zero-gain nodes.
    """
    f = np.asarray(f, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    n = len(f)
    if n == 0:
        return []
    pbf = to_pbf(f, R)
    x = list(complete_labeling(pbf, solve_roof_duality(pbf)))
    while True:
        sel = [i for i in range(n) if x[i]]
        gains = {i: f[i] - sum(R[i, j] for j in sel if j != i) for i in sel}
        drop = [i for i in sel if gains[i] <= 0]
        if not drop:
            return sel
        # lowest gain first; index breaks ties
        x[min(drop, key=lambda i: (gains[i], i))] = 0


def select_subset(g: RedundancyGraph) -> list[Extraction]:
    return [g.nodes[i] for i in select_indices(g.f, g.R)]


@dataclass
class SentenceResult:
    sentence: Sentence
    pool_size: int
    selected: list[Extraction]
    objective: float


@dataclass
class FilterResult:
    sentences: list[SentenceResult] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    warnings: GraphWarnings = field(default_factory=GraphWarnings)

    def rows(self):
        for res in self.sentences:
            for e in res.selected:
                yield res.sentence.id, e


def score_and_filter(pools: Sequence[ExtractionPool], scorer: Scorer) -> FilterResult:
    """Select a non-redundant high-score subset per sentence.

    Kept extractions are re-ranked by score (descending, pool order on ties),
    carry their score as confidence and the source tag ``aggregated``.
    """
    out = FilterResult()
    for pool in pools:
        try:
            g = build_graph(pool, scorer, out.warnings)
            idx = select_indices(g.f, g.R)
        except Exception as exc:
            out.errors.append(f"{pool.sentence.id}: {exc!r}")
            log.error("sentence %s failed: %r", pool.sentence.id, exc)
            continue
        ranked = sorted(idx, key=lambda i: (-g.f[i], i))
        kept = [g.nodes[i].with_(confidence=float(np.clip(g.f[i], 0, 1)), source="aggregated")
                for i in ranked]
        out.sentences.append(SentenceResult(pool.sentence, len(g.nodes), kept, g.objective(idx)))
    return out


def mean_pairwise_rouge(groups: Sequence[Sequence[Extraction]]) -> float:
    """Mean ROUGE-2 over all within-group unordered pairs (nan if no pairs)."""
    vals = []
    for exts in groups:
        for j in range(len(exts)):
            for k in range(j + 1, len(exts)):
                vals.append(rouge2(exts[j].words(), exts[k].words()))
    return float(np.mean(vals)) if vals else float("nan")
