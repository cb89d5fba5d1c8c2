"""Sentences, extractions, tokenization and the iterative-memory encoding."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

CLS = "[CLS]"
SEP = "[SEP]"
REL = "<rel>"
OBJ = "<obj>"
END_OF_EXTRACTIONS = "<end_of_extractions>"

RESERVED = frozenset({CLS, SEP, REL, OBJ, END_OF_EXTRACTIONS})

PUNCTUATION = ".,;()'\":!?"

_PUNCT_RE = re.compile("([" + re.escape(PUNCTUATION) + "])")
_CLITIC_RE = re.compile(r"^'[^\W\d_]+$")


class MalformedExtraction(ValueError):
    """Raised when a token sequence or tuple cannot form a valid extraction."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation characters.

    A whitespace-delimited clitic such as ``'s`` stays one token. Reserved
    symbols like ``[SEP]`` are not special-cased; build those lists directly.
    """
    out: list[str] = []
    for chunk in text.lower().split():
        if _CLITIC_RE.match(chunk):
            out.append(chunk)
            continue
        for piece in _PUNCT_RE.split(chunk):
            if piece:
                out.append(piece)
    return out


def _check_field(name: str, tokens: Sequence[str]) -> None:
    for tok in tokens:
        if tok in RESERVED:
            raise MalformedExtraction(f"reserved symbol {tok!r} inside {name}")
        if not tok or any(c.isspace() for c in tok):
            raise MalformedExtraction(f"invalid token {tok!r} in {name}")


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError(f"sentence {self.id!r} has no tokens")

    @classmethod
    def from_text(cls, id: str, text: str) -> "Sentence":
        return cls(id, tuple(tokenize(text)))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True, eq=False)
class Extraction:
    """One (arg1, rel, arg2) tuple.

    Equality and hashing are slotwise over the token lists; ``confidence``
    and ``source`` do not take part. ``confidence`` is ``None`` when the
    producing system emits no scores.
    """

    arg1: tuple[str, ...]
    rel: tuple[str, ...]
    arg2: tuple[str, ...] = ()
    confidence: Optional[float] = 1.0
    source: str = "external"

    def __post_init__(self):
        for name in ("arg1", "rel", "arg2"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            _check_field(name, getattr(self, name))
        if not self.arg1:
            raise MalformedExtraction("empty arg1")
        if not self.rel:
            raise MalformedExtraction("empty rel")
        if self.confidence is not None:
            c = float(self.confidence)
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} outside [0, 1]")
            object.__setattr__(self, "confidence", c)

    @classmethod
    def from_strings(cls, arg1: str, rel: str, arg2: str = "", **kw) -> "Extraction":
        return cls(tuple(tokenize(arg1)), tuple(tokenize(rel)), tuple(tokenize(arg2)), **kw)

    @property
    def key(self) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
        return (self.arg1, self.rel, self.arg2)

    def __eq__(self, other):
        if not isinstance(other, Extraction):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def words(self) -> list[str]:
        """Serialized triple without field markers."""
        return [*self.arg1, *self.rel, *self.arg2]

    def with_(self, **changes) -> "Extraction":
        fields = dict(arg1=self.arg1, rel=self.rel, arg2=self.arg2,
                      confidence=self.confidence, source=self.source)
        fields.update(changes)
        return Extraction(**fields)

    def __str__(self):
        return f"({' '.join(self.arg1)} ; {' '.join(self.rel)} ; {' '.join(self.arg2)})"


@dataclass(frozen=True)
class MemoryInput:
    sentence: Sentence
    prior_extractions: tuple[Extraction, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "prior_extractions", tuple(self.prior_extractions))


def linearize(ext: Extraction) -> list[str]:
    return [*ext.arg1, REL, *ext.rel, OBJ, *ext.arg2]


def parse_linearized(tokens: Sequence[str], confidence: float = 1.0,
                     source: str = "model") -> Extraction:
    """Inverse of :func:`linearize`.

    The first ``<rel>`` and the first ``<obj>`` after it delimit the fields;
    later duplicate markers are dropped.
    """
    tokens = list(tokens)
    try:
        r = tokens.index(REL)
        o = tokens.index(OBJ, r + 1)
    except ValueError:
        raise MalformedExtraction(f"missing field marker in {tokens!r}") from None
    arg1 = tokens[:r]
    rel = [t for t in tokens[r + 1:o] if t != REL]
    arg2 = [t for t in tokens[o + 1:] if t not in (REL, OBJ)]
    return Extraction(tuple(arg1), tuple(rel), tuple(arg2), confidence=confidence, source=source)


def memory_tokens(sentence_tokens: Iterable[str],
                  prior_sequences: Iterable[Sequence[str]]) -> list[str]:
    """[CLS] + sentence, then ``[SEP] + seq`` for every already-linearized prior."""
    out = [CLS, *sentence_tokens]
    for seq in prior_sequences:
        out.append(SEP)
        out.extend(seq)
    return out


def build_memory_input(m: MemoryInput) -> list[str]:
    return memory_tokens(m.sentence.tokens, (linearize(e) for e in m.prior_extractions))
