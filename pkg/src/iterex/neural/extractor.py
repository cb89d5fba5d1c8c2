"""Training and iterative decoding for the seq2seq extractor."""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..train_builder import TrainingInstance
from ..tuples import (
    CLS,
    END_OF_EXTRACTIONS,
    Extraction,
    MalformedExtraction,
    Sentence,
    linearize,
    memory_tokens,
    parse_linearized,
)
from .model import (
    Batch,
    ModelConfig,
    _attend,
    _gru_step,
    _sigmoid,
    encode_batch,
    extend_source,
    init_params,
    loss_and_grads,
    make_batch,
    param_shapes,
)
from .vocab import Vocab

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ITEREX-CKPT\n"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Encoded:
    tokens: list[str]
    H: np.ndarray        # (1, S, 2h)
    Pproj: np.ndarray    # (1, S, a)
    mask: np.ndarray     # (1, S)
    src_ext: np.ndarray  # (S,)
    oovs: list[str]


@dataclass
class DecodeState:
    s: np.ndarray
    ctx: np.ndarray


@dataclass
class Iteration:
    input_tokens: list[str]
    emitted: list[str]
    attention: np.ndarray  # (steps, len(input_tokens)), EOS step included
    token_logps: list[float]
    extraction: Optional[Extraction] = None


@dataclass
class GenerationResult:
    extractions: list[Extraction]
    iterations: list[Iteration]
    malformed: int = 0
    stopped_by: str = "end"  # "end", "max_iters" or "max_input"


@dataclass
class TrainResult:
    initial_loss: float
    losses: list[float]


class Seq2SeqExtractor:
    def __init__(self, vocab: Vocab, config: ModelConfig, params=None):
        self.vocab = vocab
        self.config = config
        if params is None:
            params = init_params(config, len(vocab), np.random.default_rng(config.seed))
        expected = param_shapes(config, len(vocab))
        if list(params) != list(expected) or any(params[k].shape != s for k, s in expected.items()):
            raise ValueError("parameter names/shapes do not match the configuration")
        self.params = params

    @classmethod
    def from_instances(cls, instances: Sequence[TrainingInstance], config: ModelConfig):
        vocab = Vocab.build([(*i.input, *i.target) for i in instances], config.min_freq)
        return cls(vocab, config)

    # ------------------------------------------------------------ training

    def batch(self, pairs) -> Batch:
        return make_batch(self.vocab, pairs)

    def loss(self, instances: Sequence[TrainingInstance]) -> float:
        b = self.batch([(i.input, i.target) for i in instances])
        return float(loss_and_grads(self.params, b, self.config, len(self.vocab), need_grads=False)[0])

    def train(self, instances: Sequence[TrainingInstance], epochs: Optional[int] = None,
              callback=None) -> TrainResult:
        """Plain SGD on teacher-forced cross-entropy, gradient norm clipped.

        Mini-batches are reshuffled every epoch from ``config.seed``.
        """
        if not instances:
            raise ValueError("no training instances")
        cfg = self.config
        epochs = cfg.epochs if epochs is None else epochs
        rng = np.random.default_rng(cfg.seed + 1)
        V = len(self.vocab)
        pairs = [(i.input, i.target) for i in instances]
        initial = self.loss(instances)
        losses = []
        for epoch in range(epochs):
            order = rng.permutation(len(pairs))
            total, count = 0.0, 0.0
            for lo in range(0, len(order), cfg.batch_size):
                b = self.batch([pairs[k] for k in order[lo:lo + cfg.batch_size]])
                loss, grads, _ = loss_and_grads(self.params, b, cfg, V)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}")
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                scale = cfg.lr * (min(1.0, cfg.clip_norm / norm) if norm > 0 else 1.0)
                for k, g in grads.items():
                    self.params[k] -= scale * g
                ntok = b.tgt_mask.sum()
                total += loss * ntok
                count += ntok
            losses.append(total / count)
            log.info("epoch %d loss %.5f", epoch + 1, losses[-1])
            if callback is not None and callback(epoch, losses[-1]) is False:
                break
        return TrainResult(initial, losses)

    # ------------------------------------------------------------ inference

    def encode(self, tokens: Sequence[str]) -> Encoded:
        tokens = list(tokens)
        if not tokens or tokens[0] != CLS:
            raise ValueError("encoder input must start with [CLS]")
        if len(tokens) > self.config.max_input:
            raise ValueError(f"input of {len(tokens)} tokens exceeds cap {self.config.max_input}")
        ids, ext, oovs = extend_source(self.vocab, tokens)
        src = np.array([ids])
        mask = np.ones_like(src, dtype=np.float64)
        H, _ = encode_batch(self.params, src, mask, self.config)
        return Encoded(tokens, H, H @ self.params["att_Wh"], mask, np.array(ext), oovs)

    def initial_state(self, enc: Encoded) -> DecodeState:
        p = self.params
        s = np.tanh(enc.H[:, 0] @ p["init_W"] + p["init_b"])
        return DecodeState(s, np.zeros((1, 2 * self.config.d_hid)))

    def decode_step(self, enc: Encoded, state: DecodeState, prev_id: int):
        """Distribution over ``len(vocab) + len(enc.oovs)`` ids, new state, attention."""
        p, cfg = self.params, self.config
        de, d = cfg.d_emb, cfg.d_dec
        V = len(self.vocab)
        prev_vocab_id = prev_id if prev_id < V else self.vocab.unk
        emb = p["emb"][prev_vocab_id][None, :]
        gx = emb @ p["dec_W"][:de] + state.ctx @ p["dec_W"][de:] + p["dec_b"]
        s, _ = _gru_step(gx, state.s, p["dec_U"], d)
        alpha, ctx, _ = _attend(p, enc.H, enc.Pproj, enc.mask, s)
        o = np.concatenate([s, ctx], axis=1)
        logits = o @ p["out_W"] + p["out_b"]
        logits -= logits.max()
        pg = np.exp(logits[0])
        pg /= pg.sum()
        g = float(_sigmoid(np.concatenate([o, emb], axis=1) @ p["gate_w"] + p["gate_b"][0])[0])
        dist = np.zeros(V + len(enc.oovs))
        dist[:V] = g * pg
        np.add.at(dist, enc.src_ext, (1.0 - g) * alpha[0])
        new = DecodeState(s, ctx)
        return dist, new, alpha[0], g

    def id_to_token(self, enc: Encoded, i: int) -> str:
        V = len(self.vocab)
        return self.vocab.itos[i] if i < V else enc.oovs[i - V]

    def greedy_decode(self, tokens: Sequence[str], max_len: Optional[int] = None):
        """Emitted tokens (without EOS), per-step log-probs and the attention matrix."""
        max_len = max_len or self.config.max_len
        enc = self.encode(tokens)
        state = self.initial_state(enc)
        prev = self.vocab.bos
        out, lps, alphas = [], [], []
        for _ in range(max_len):
            dist, state, alpha, _ = self.decode_step(enc, state, prev)
            i = int(np.argmax(dist))
            lps.append(float(np.log(max(dist[i], 1e-300))))
            alphas.append(alpha)
            if i == self.vocab.eos:
                break
            out.append(self.id_to_token(enc, i))
            prev = i
        return out, lps, np.array(alphas)

    def generate_extractions(self, sentence: Sentence, max_iters: Optional[int] = None,
                             max_len: Optional[int] = None) -> GenerationResult:
        """Decode one extraction at a time, feeding each back into the memory."""
        cfg = self.config
        max_iters = cfg.max_iters if max_iters is None else max_iters
        memory: list[list[str]] = []
        result = GenerationResult([], [])
        for _ in range(max_iters):
            inp = memory_tokens(sentence.tokens, memory)
            if len(inp) > cfg.max_input:
                result.stopped_by = "max_input"
                return result
            emitted, lps, att = self.greedy_decode(inp, max_len)
            it = Iteration(inp, emitted, att, lps)
            result.iterations.append(it)
            if emitted == [END_OF_EXTRACTIONS]:
                result.stopped_by = "end"
                return result
            conf = float(np.exp(np.mean(lps)))
            try:
                ext = parse_linearized(emitted, confidence=min(conf, 1.0))
            except MalformedExtraction:
                result.malformed += 1
            else:
                it.extraction = ext
                result.extractions.append(ext)
            memory.append(emitted)
        result.stopped_by = "max_iters"
        return result

    def force_decode(self, tokens: Sequence[str], target: Sequence[str]):
        """Per-token log-probs (EOS included) and attention rows under teacher forcing."""
        enc = self.encode(tokens)
        V = len(self.vocab)
        ids = []
        for t in target:
            if t in self.vocab.stoi:
                ids.append(self.vocab.stoi[t])
            elif t in enc.oovs:
                ids.append(V + enc.oovs.index(t))
            else:
                ids.append(self.vocab.unk)
        ids.append(self.vocab.eos)
        state = self.initial_state(enc)
        prev = self.vocab.bos
        lps, alphas = [], []
        for i in ids:
            dist, state, alpha, _ = self.decode_step(enc, state, prev)
            lps.append(float(np.log(max(dist[i], 1e-300))))
            alphas.append(alpha)
            prev = i
        return lps, np.array(alphas)

    def score_extraction(self, sentence: Sentence, extraction: Extraction) -> float:
        lps, _ = self.force_decode(memory_tokens(sentence.tokens, []), linearize(extraction))
        return float(min(1.0, np.exp(np.mean(lps))))

    def attention_matrix(self, tokens: Sequence[str], decoded: Sequence[str]) -> np.ndarray:
        """(len(decoded), len(tokens)) attention; row t is the step that emits decoded[t]."""
        _, alphas = self.force_decode(tokens, decoded)
        return alphas[: len(decoded)]

    def export_attention(self, path, tokens: Sequence[str], decoded: Sequence[str]) -> np.ndarray:
        mat = self.attention_matrix(tokens, decoded)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["", *tokens])
            for tok, row in zip(decoded, mat):
                w.writerow([tok, *(f"{v:.8f}" for v in row)])
        return mat

    # ------------------------------------------------------------ checkpoint

    def save(self, path) -> None:
        """Header (format version, config, vocab, parameter layout) then float64 data."""
        layout = [[k, list(v.shape)] for k, v in self.params.items()]
        header = json.dumps({"format_version": CHECKPOINT_VERSION, "config": self.config.to_dict(),
                             "vocab": self.vocab.itos, "params": layout}).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for v in self.params.values():
                fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Seq2SeqExtractor":
        with open(path, "rb") as fh:
            if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint")
            (n,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(n).decode("utf-8"))
            if header.get("format_version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
            params = {}
            for name, shape in header["params"]:
                count = int(np.prod(shape)) if shape else 1
                buf = fh.read(8 * count)
                if len(buf) != 8 * count:
                    raise ValueError(f"{path}: truncated at {name}")
                params[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        itos = header["vocab"]
        vocab = Vocab(itos[len(Vocab().itos):])
        if vocab.itos != itos:
            raise ValueError(f"{path}: vocabulary header is inconsistent")
        return cls(vocab, ModelConfig.from_dict(header["config"]), params)


def covered_attention(sentence: Sentence, result: GenerationResult) -> Optional[tuple[float, float]]:
    """Attention mass on words of the first extraction, during extractions 1 and 2.

    Columns are the sentence positions whose token occurs in the first
    emitted sequence; each value is the per-step mass on those columns,
    averaged over the emitted (non-EOS) steps. ``None`` when the run has no
    second extraction.
    """
    its = [it for it in result.iterations if it.emitted != [END_OF_EXTRACTIONS]]
    if len(its) < 2:
        return None
    first = set(its[0].emitted)
    cols = [i + 1 for i, t in enumerate(sentence.tokens) if t in first]
    if not cols:
        return None
    out = []
    for it in its[:2]:
        att = it.attention[: max(1, len(it.emitted))]
        out.append(float(att[:, cols].sum(axis=1).mean()))
    return out[0], out[1]
