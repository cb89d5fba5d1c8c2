"""Iterative-memory training instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .tuples import (
    CLS,
    END_OF_EXTRACTIONS,
    Extraction,
    MemoryInput,
    Sentence,
    build_memory_input,
    linearize,
)

DEFAULT_MAX_INPUT = 300


@dataclass(frozen=True)
class TrainingInstance:
    input: tuple[str, ...]
    target: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "input", tuple(self.input))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.input or self.input[0] != CLS:
            raise ValueError("instance input must start with [CLS]")
        if not self.target:
            raise ValueError("instance target is empty")


def build_instances(sentence: Sentence, exts: Sequence[Extraction],
                    max_input: int = DEFAULT_MAX_INPUT) -> list[TrainingInstance]:
    """One instance per extraction plus a final one targeting end-of-extractions.

    When a memory would exceed ``max_input`` tokens, the trailing extractions
    that do not fit are left out of the memory (their targets still appear).
    """
    exts = list(exts)
    out = []
    limit = 0  # number of priors that fit in the memory
    for k in range(len(exts) + 1):
        candidate = build_memory_input(MemoryInput(sentence, exts[:k]))
        if len(candidate) <= max_input:
            limit = k
        memory = build_memory_input(MemoryInput(sentence, exts[:limit]))
        target = linearize(exts[k]) if k < len(exts) else [END_OF_EXTRACTIONS]
        out.append(TrainingInstance(memory, target))
    return out


def build_corpus(pairs: Iterable[tuple[Sentence, Sequence[Extraction]]],
                 max_input: int = DEFAULT_MAX_INPUT, shuffle_seed=None) -> list[TrainingInstance]:
    """Instances for every sentence; ``shuffle_seed`` randomizes each sentence's tuple order."""
    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    out = []
    for sentence, exts in pairs:
        exts = list(exts)
        if rng is not None:
            exts = [exts[i] for i in rng.permutation(len(exts))]
        out.extend(build_instances(sentence, exts, max_input))
    return out


def write_instances(path, instances: Iterable[TrainingInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(" ".join(inst.input) + "\t" + " ".join(inst.target) + "\n")


def read_instances(path) -> list[TrainingInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            src, sep, tgt = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'input<TAB>target'")
            out.append(TrainingInstance(src.split(" "), tgt.split(" ")))
    return out
