"""Seeded template corpora for tests, benchmarks and the bundled toy data."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .tuples import Extraction, Sentence

NAMES = ("john", "mary", "alice", "bob", "carol", "dave", "emma", "frank", "grace", "henry",
         "iris", "jack")
OBJECTS = ("the car", "a book", "the house", "a letter", "the piano", "a bike", "the report",
           "a cake", "the garden", "a song")
VERBS = ("bought", "sold", "wrote", "painted", "cleaned", "repaired", "found", "sent", "played",
         "baked")
PLACES = ("paris", "london", "berlin", "rome", "madrid", "tokyo")
INTRANSITIVE = ("slept", "laughed", "arrived", "left", "smiled")

SOURCES = ("clean", "clause", "noisy")


def _t(a1: str, rel: str, a2: str = "") -> Extraction:
    return Extraction.from_strings(a1, rel, a2, source="gold")


def _pick(rng, pool, k=1):
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in idx]


def _template(rng, count: int) -> tuple[str, list[Extraction]]:
    """One sentence with exactly ``count`` gold tuples."""
    variant = int(rng.integers(2))
    if count == 1:
        if variant:
            x, = _pick(rng, NAMES)
            v, = _pick(rng, INTRANSITIVE)
            return f"{x} {v} .", [_t(x, v)]
        x, = _pick(rng, NAMES)
        v, = _pick(rng, VERBS)
        o, = _pick(rng, OBJECTS)
        return f"{x} {v} {o} .", [_t(x, v, o)]
    if count == 2:
        x, y = _pick(rng, NAMES, 2)
        v, = _pick(rng, VERBS)
        o, o2 = _pick(rng, OBJECTS, 2)
        kind = int(rng.integers(3))
        if kind == 0:
            return f"{x} {v} {o} and {o2} .", [_t(x, v, o), _t(x, v, o2)]
        if kind == 1:
            return f"{x} and {y} {v} {o} .", [_t(x, v, o), _t(y, v, o)]
        p, = _pick(rng, PLACES)
        return f"{x} {v} {o} in {p} .", [_t(x, v, o), _t(x, f"{v} {o} in", p)]
    if count == 3:
        x, = _pick(rng, NAMES)
        if variant:
            v1, v2, v3 = _pick(rng, VERBS, 3)
            o1, o2, o3 = _pick(rng, OBJECTS, 3)
            return (f"{x} {v1} {o1} , {v2} {o2} and {v3} {o3} .",
                    [_t(x, v1, o1), _t(x, v2, o2), _t(x, v3, o3)])
        x, y, z = _pick(rng, NAMES, 3)
        v, = _pick(rng, INTRANSITIVE)
        return f"{x} , {y} and {z} {v} .", [_t(x, v), _t(y, v), _t(z, v)]
    if count == 4:
        if variant:
            x, y = _pick(rng, NAMES, 2)
            v, = _pick(rng, VERBS)
            o, o2 = _pick(rng, OBJECTS, 2)
            return (f"{x} and {y} {v} {o} and {o2} .",
                    [_t(x, v, o), _t(x, v, o2), _t(y, v, o), _t(y, v, o2)])
        names = _pick(rng, NAMES, 4)
        v, = _pick(rng, INTRANSITIVE)
        return (f"{names[0]} , {names[1]} , {names[2]} and {names[3]} {v} .",
                [_t(n, v) for n in names])
    raise ValueError(f"unsupported tuple count {count}")


def toy_corpus(n: int = 50, seed: int = 0) -> list[tuple[Sentence, list[Extraction]]]:
    """``n`` distinct sentences cycling through 1 to 4 gold tuples each."""
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        count = len(out) % 4 + 1
        text, tuples = _template(rng, count)
        if text in seen:
            continue
        seen.add(text)
        out.append((Sentence.from_text(f"s{len(out) + 1:04d}", text), tuples))
    return out


def _near_duplicate(rng, e: Extraction, sentence: Sentence) -> Extraction:
    """A slot-perturbed copy that stays lexically close to ``e``."""
    if e.arg2 and rng.random() < 0.5:
        extra = sentence.tokens[-1] if sentence.tokens[-1] not in e.arg2 else "too"
        return e.with_(arg2=e.arg2 + (extra,))
    if len(e.arg2) > 1:
        return e.with_(arg2=e.arg2[1:])
    return e.with_(rel=("also",) + e.rel)


def multi_source_corpus(n: int = 50, seed: int = 0):
    """Sentences, gold tuples and three synthetic extractor outputs.

    ``clean`` emits the gold tuples with descending confidence; ``clause``
    emits gold tuples plus a near-duplicate of each; ``noisy`` emits a random
    subset with some near-duplicates and truncated arguments.
    Returns ``(corpus, {source: [(sentence_id, Extraction)]})``.
    """
    corpus = toy_corpus(n, seed)
    rng = np.random.default_rng([seed, 1])
    outputs: dict[str, list] = {s: [] for s in SOURCES}
    for sent, gold in corpus:
        for k, e in enumerate(gold):
            outputs["clean"].append((sent.id, e.with_(confidence=round(0.95 - 0.1 * k, 4),
                                                      source="clean")))
        for e in gold:
            c = round(float(rng.uniform(0.5, 1.0)), 4)
            outputs["clause"].append((sent.id, e.with_(confidence=c, source="clause")))
            d = _near_duplicate(rng, e, sent)
            outputs["clause"].append((sent.id, d.with_(confidence=round(c * 0.9, 4),
                                                       source="clause")))
        for e in gold:
            r = rng.random()
            c = round(float(rng.uniform(0.1, 0.9)), 4)
            if r < 0.4:
                outputs["noisy"].append((sent.id, e.with_(confidence=c, source="noisy")))
            elif r < 0.7:
                outputs["noisy"].append((sent.id, _near_duplicate(rng, e, sent)
                                         .with_(confidence=c, source="noisy")))
            elif len(e.arg1) > 1:
                outputs["noisy"].append((sent.id, e.with_(arg1=e.arg1[-1:], confidence=c,
                                                          source="noisy")))
    return corpus, outputs


def write_bundle(directory, n: int = 50, seed: int = 0) -> dict[str, Path]:
    """Write the toy sentence, gold and per-source extraction files."""
    from .evaluation import write_gold
    from .ingest import write_extractions, write_sentences

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    corpus, outputs = multi_source_corpus(n, seed)
    paths = {"sentences": d / "toy_sentences.tsv", "gold": d / "toy_gold.tsv"}
    write_sentences(paths["sentences"], [s for s, _ in corpus])
    write_gold(paths["gold"], {s.id: g for s, g in corpus})
    for src, rows in outputs.items():
        paths[src] = d / f"toy_{src}.tsv"
        write_extractions(paths[src], rows)
    return paths


def bundled(name: str) -> Path:
    """Path of a bundled data file, e.g. ``bundled("toy_gold.tsv")``."""
    return Path(str(resources.files("iterex") / "data" / name))


if __name__ == "__main__":
    write_bundle(Path(__file__).parent / "data")
