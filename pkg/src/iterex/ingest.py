"""Reading extractor outputs, pooling per sentence and random bootstrapping."""

from __future__ import annotations

import logging
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .tuples import Extraction, MalformedExtraction, Sentence, tokenize

log = logging.getLogger(__name__)


@dataclass
class LineError:
    path: str
    lineno: int
    message: str

    def __str__(self):
        return f"{self.path}:{self.lineno}: {self.message}"


@dataclass
class IngestReport:
    errors: list[LineError] = field(default_factory=list)
    per_source: Counter = field(default_factory=Counter)
    duplicates: int = 0
    skipped_sentences: list[str] = field(default_factory=list)

    def summary(self) -> str:
        parts = [f"{src}={n}" for src, n in self.per_source.items()]
        return (f"extractions: {', '.join(parts) or 'none'}; duplicates removed: {self.duplicates}; "
                f"malformed lines: {len(self.errors)}; empty sentences: {len(self.skipped_sentences)}")


@dataclass
class ExtractionPool:
    sentence: Sentence
    extractions: list[Extraction] = field(default_factory=list)

    def sources(self) -> list[str]:
        seen = []
        for e in self.extractions:
            if e.source not in seen:
                seen.append(e.source)
        return seen

    def by_source(self, source: str) -> list[Extraction]:
        return [e for e in self.extractions if e.source == source]


@dataclass
class BootstrapCorpus:
    pairs: list[tuple[Sentence, list[Extraction]]]


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def read_sentences(path) -> dict[str, Sentence]:
    out: dict[str, Sentence] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            sid, sep, text = line.partition("\t")
            if not sep or not tokenize(text):
                raise ValueError(f"{path}:{lineno}: expected 'sentence_id<TAB>text'")
            if sid in out:
                raise ValueError(f"{path}:{lineno}: duplicate sentence id {sid!r}")
            out[sid] = Sentence.from_text(sid, text)
    return out


def write_sentences(path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(f"{s.id}\t{s.text}\n")


def read_extractions(path, source: str = "external",
                     report: Optional[IngestReport] = None) -> list[tuple[str, Extraction]]:
    """Parse an extraction TSV.

    Lines are ``sentence_id, confidence, arg1, rel, arg2``; an optional sixth
    column overrides ``source`` (pooled files carry it). An empty confidence
    field yields ``confidence=None``. Malformed lines go to ``report``.
    """
    report = report if report is not None else IngestReport()
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (5, 6):
                report.errors.append(LineError(str(path), lineno, f"expected 5 fields, got {len(cols)}"))
                continue
            sid, conf, arg1, rel, arg2 = cols[:5]
            src = cols[5] if len(cols) == 6 and cols[5] else source
            try:
                c = _clamp(float(conf)) if conf.strip() else None
                ext = Extraction(tuple(tokenize(arg1)), tuple(tokenize(rel)), tuple(tokenize(arg2)),
                                 confidence=c, source=src)
            except (ValueError, MalformedExtraction) as exc:
                report.errors.append(LineError(str(path), lineno, str(exc)))
                continue
            report.per_source[src] += 1
            out.append((sid, ext))
    return out


def write_extractions(path, rows: Iterable[tuple[str, Extraction]], with_source: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, e in rows:
            conf = "" if e.confidence is None else repr(e.confidence)
            cols = [sid, conf, " ".join(e.arg1), " ".join(e.rel), " ".join(e.arg2)]
            if with_source:
                cols.append(e.source)
            fh.write("\t".join(cols) + "\n")


def order_for_bootstrap(exts: Sequence[Extraction], has_confidence: bool = True) -> list[Extraction]:
    if not has_confidence:
        return list(exts)
    return sorted(exts, key=lambda e: -(e.confidence or 0.0))


def pool_extractions(sentences: dict[str, Sentence],
                     per_source: Sequence[tuple[str, list[tuple[str, Extraction]]]],
                     report: Optional[IngestReport] = None) -> list[ExtractionPool]:
    """Merge source outputs sentence by sentence.

    ``per_source`` is ordered by source rank. Within a sentence extractions
    are ordered by confidence (descending), then source rank, then file
    order; slotwise duplicates keep the first occurrence.
    """
    report = report if report is not None else IngestReport()
    buckets: dict[str, list[tuple[float, int, int, Extraction]]] = defaultdict(list)
    for rank, (src, rows) in enumerate(per_source):
        for order, (sid, e) in enumerate(rows):
            if sid not in sentences:
                report.errors.append(LineError(src, order + 1, f"unknown sentence id {sid!r}"))
                continue
            conf = e.confidence if e.confidence is not None else 0.0
            buckets[sid].append((-conf, rank, order, e))
    pools = []
    for sid, sent in sentences.items():
        seen = set()
        kept = []
        for *_, e in sorted(buckets.get(sid, []), key=lambda r: r[:3]):
            if e in seen:
                report.duplicates += 1
                continue
            seen.add(e)
            kept.append(e)
        pools.append(ExtractionPool(sent, kept))
    return pools


def source_rng(seed: int, sentence_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(sentence_id.encode("utf-8"))])


def build_random_bootstrap(pools: Sequence[ExtractionPool], seed: int,
                           source_order: Optional[Sequence[str]] = None,
                           no_confidence: Iterable[str] = (),
                           report: Optional[IngestReport] = None) -> BootstrapCorpus:
    """Per sentence, take every extraction of one uniformly chosen source.

    Only sources that produced something for the sentence are candidates;
    the choice depends only on ``(seed, sentence id)``.
    """
    report = report if report is not None else IngestReport()
    no_conf = set(no_confidence)
    pairs = []
    for pool in pools:
        present = pool.sources()
        if not present:
            report.skipped_sentences.append(pool.sentence.id)
            continue
        if source_order is not None:
            rank = {s: k for k, s in enumerate(source_order)}
            present.sort(key=lambda s: rank.get(s, len(rank)))
        else:
            present.sort()
        chosen = present[int(source_rng(seed, pool.sentence.id).integers(len(present)))]
        exts = order_for_bootstrap(pool.by_source(chosen), has_confidence=chosen not in no_conf)
        pairs.append((pool.sentence, exts))
    return BootstrapCorpus(pairs)


def read_pools(sentences_path, extractions_path) -> list[ExtractionPool]:
    """Load a pooled extraction file (6-column) against its sentence file."""
    sentences = read_sentences(sentences_path)
    rows = read_extractions(extractions_path)
    grouped: dict[str, list[Extraction]] = defaultdict(list)
    for sid, e in rows:
        grouped[sid].append(e)
    pools = []
    for sid, sent in sentences.items():
        seen = set()
        exts = [e for e in grouped.get(sid, []) if not (e in seen or seen.add(e))]
        pools.append(ExtractionPool(sent, exts))
    return pools
