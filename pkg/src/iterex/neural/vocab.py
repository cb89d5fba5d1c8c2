from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from ..tuples import CLS, END_OF_EXTRACTIONS, OBJ, REL, SEP

PAD = "<pad>"
UNK = "<unk>"
BOS = "<bos>"
EOS = "<eos>"

SPECIALS = (PAD, UNK, BOS, EOS, CLS, SEP, REL, OBJ, END_OF_EXTRACTIONS)


class Vocab:
    """Token/index bijection with the reserved symbols at fixed low indices."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        for t in tokens:
            if t not in SPECIALS:
                self.itos.append(t)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    pad = property(lambda self: 0)
    unk = property(lambda self: 1)
    bos = property(lambda self: 2)
    eos = property(lambda self: 3)

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]], min_freq: int = 2) -> "Vocab":
        counts = Counter(t for seq in sequences for t in seq)
        kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
                      key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def index(self, tok: str) -> int:
        return self.stoi.get(tok, 1)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]
