"""Benchmark scoring: tuple matching, P-R curves and redundancy measures.

The matcher is a simplified CaRB-style scorer: slot-aligned token overlap,
precision from each prediction's best gold, recall from a greedy
one-to-one assignment of predictions to golds.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .tuples import Extraction

EMPTY_PRECISION = 1.0

STOPWORDS = frozenset("""
a an the and or but if of at by for with about against between into through
during before after above below to from up down in out on off over under
is am are was were be been being have has had do does did it its this that
these those he she they them his her their we you i as not no so than too
very can will just
""".split())


class EvaluationError(ValueError):
    pass


def _overlap(a: Sequence[str], b: Sequence[str]) -> int:
    return sum((Counter(a) & Counter(b)).values())


def match_scores(pred: Extraction, gold: Extraction) -> tuple[float, float]:
    matched = (_overlap(pred.arg1, gold.arg1) + _overlap(pred.rel, gold.rel)
               + _overlap(pred.arg2, gold.arg2))
    n_pred = len(pred.arg1) + len(pred.rel) + len(pred.arg2)
    n_gold = len(gold.arg1) + len(gold.rel) + len(gold.arg2)
    return matched / n_pred, matched / n_gold


def greedy_assignment(recall: Sequence[Sequence[float]]) -> float:
    """Sum of pair recalls under greedy one-to-one matching.

    ``recall[p][g]`` is the pair recall of prediction ``p`` against gold
    ``g``. Pairs are taken by decreasing recall, ties by (pred, gold) index.
    """
    pairs = sorted(((r, p, g) for p, row in enumerate(recall) for g, r in enumerate(row) if r > 0),
                   key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_g = set(), set()
    total = 0.0
    for r, p, g in pairs:
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        total += r
    return total


def system_pr(preds: Mapping[str, Sequence[Extraction]],
              golds: Mapping[str, Sequence[Extraction]]) -> tuple[float, float]:
    """Corpus precision and recall.

    Precision averages, over all predictions, the best pair precision against
    the sentence's golds. Recall averages, over all golds, the pair recall of
    the greedily assigned prediction (0 if unassigned). With no predictions
    precision is 1.0 by convention.
    """
    prec_sum, n_pred = 0.0, 0
    rec_sum, n_gold = 0.0, sum(len(g) for g in golds.values())
    for sid in sorted(set(preds) | set(golds)):
        ps, gs = list(preds.get(sid, ())), list(golds.get(sid, ()))
        scores = [[match_scores(p, g) for g in gs] for p in ps]
        for row in scores:
            prec_sum += max((s[0] for s in row), default=0.0)
        n_pred += len(ps)
        rec_sum += greedy_assignment([[s[1] for s in row] for row in scores])
    precision = prec_sum / n_pred if n_pred else EMPTY_PRECISION
    recall = rec_sum / n_gold if n_gold else 0.0
    return precision, recall


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class PRCurve:
    points: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def f1s(self) -> list[float]:
        return [f1(p, r) for _, p, r in self.points]

    @property
    def optimal_f1(self) -> float:
        return max(self.f1s, default=0.0)

    @property
    def last_f1(self) -> float:
        return self.f1s[-1] if self.points else 0.0

    @property
    def auc(self) -> float:
        """Trapezoidal area of precision over recall between the observed points."""
        area = 0.0
        for (_, p0, r0), (_, p1, r1) in zip(self.points, self.points[1:]):
            area += (r1 - r0) * (p0 + p1) / 2
        return area

    def to_csv(self) -> str:
        lines = ["threshold,precision,recall,f1"]
        for (t, p, r), f in zip(self.points, self.f1s):
            lines.append(f"{t:.6g},{p:.6f},{r:.6f},{f:.6f}")
        lines.append("optimal_f1,auc,last_f1")
        lines.append(f"{self.optimal_f1:.6f},{self.auc:.6f},{self.last_f1:.6f}")
        return "\n".join(lines) + "\n"

    def to_svg(self, width: int = 400, height: int = 300) -> str:
        pad = 40
        w, h = width - 2 * pad, height - 2 * pad
        pts = " ".join(f"{pad + r * w:.1f},{pad + (1 - p) * h:.1f}" for _, p, r in self.points)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
            f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="#888"/>\n'
            f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>\n'
            f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">recall</text>\n'
            f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
            f'text-anchor="middle">precision</text>\n'
            f'<text x="{width / 2}" y="20" text-anchor="middle">'
            f'opt F1 {self.optimal_f1:.3f} / AUC {self.auc:.3f} / last F1 {self.last_f1:.3f}</text>\n'
            "</svg>\n"
        )


def pr_curve(preds: Mapping[str, Sequence[Extraction]],
             golds: Mapping[str, Sequence[Extraction]]) -> PRCurve:
    if not any(golds.values()):
        raise EvaluationError("gold set is empty")
    conf = lambda e: 1.0 if e.confidence is None else e.confidence  # noqa: E731
    thresholds = sorted({conf(e) for es in preds.values() for e in es}, reverse=True)
    curve = PRCurve()
    for t in thresholds:
        kept = {sid: [e for e in es if conf(e) >= t] for sid, es in preds.items()}
        p, r = system_pr(kept, golds)
        curve.points.append((t, p, r))
    if not curve.points:
        curve.points.append((1.0, EMPTY_PRECISION, 0.0))
    return curve


def tuple_words(e: Extraction, stopwords=STOPWORDS) -> set[str]:
    return {w for w in e.words() if w not in stopwords}


@dataclass
class RedundancyStats:
    mno: float
    iou: float
    tuples: int


def redundancy_metrics(preds: Mapping[str, Sequence[Extraction]],
                       stopwords=STOPWORDS) -> RedundancyStats:
    """MNO over distinct corpus words and IOU over within-sentence tuple pairs.

    MNO counts, for each distinct non-stopword output word, the number of
    tuples containing it, and averages these counts.
    """
    occurrences: Counter = Counter()
    ious = []
    n = 0
    for exts in preds.values():
        sets = [tuple_words(e, stopwords) for e in exts]
        n += len(sets)
        for s in sets:
            occurrences.update(s)
        for j in range(len(sets)):
            for k in range(j + 1, len(sets)):
                union = sets[j] | sets[k]
                ious.append(len(sets[j] & sets[k]) / len(union) if union else 0.0)
    mno = sum(occurrences.values()) / len(occurrences) if occurrences else 0.0
    iou = sum(ious) / len(ious) if ious else 0.0
    return RedundancyStats(mno, iou, n)


def group_by_sentence(rows: Iterable[tuple[str, Extraction]]) -> dict[str, list[Extraction]]:
    out: dict[str, list[Extraction]] = defaultdict(list)
    for sid, e in rows:
        out[sid].append(e)
    return dict(out)


def read_gold(path) -> dict[str, list[Extraction]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise EvaluationError(f"{path}:{lineno}: expected 4 fields, got {len(cols)}")
            rows.append((cols[0], Extraction.from_strings(*cols[1:], confidence=None, source="gold")))
    return group_by_sentence(rows)


def write_gold(path, golds: Mapping[str, Sequence[Extraction]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, exts in golds.items():
            for e in exts:
                fh.write("\t".join([sid, " ".join(e.arg1), " ".join(e.rel), " ".join(e.arg2)]) + "\n")

