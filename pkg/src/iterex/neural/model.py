"""Recurrent encoder-decoder with additive attention and a copy gate.

Encoder: bidirectional GRU over the memory input; ``H[t] = [fwd_t; bwd_t]``.
Decoder: GRU fed ``[emb(prev); context(prev)]`` and initialized from the
``[CLS]`` state. At each step::

    alpha   = softmax_i(v . tanh(H_i Wh + s Ws + b))
    context = sum_i alpha_i H_i
    p_gen   = softmax([s; context] Wo + bo)
    g       = sigmoid([s; context; emb(prev)] . wg + bg)
    P(w)    = g p_gen(w) + (1 - g) sum_{i: src_i = w} alpha_i

Source tokens outside the vocabulary get per-sequence extended ids, so they
are reachable through the copy term only. Gradients are hand-derived; see
``loss_and_grads``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .vocab import Vocab

_NEG = -1e30


@dataclass
class ModelConfig:
    d_emb: int = 64
    d_hid: int = 64
    d_dec: int = 128
    d_att: int = 64
    min_freq: int = 2
    lr: float = 1.0
    epochs: int = 100
    batch_size: int = 16
    clip_norm: float = 5.0
    seed: int = 0
    init_scale: float = 0.1
    max_iters: int = 16
    max_len: int = 40
    max_input: int = 300

    def __post_init__(self):
        errors = []
        for name, f in self.__dataclass_fields__.items():
            v = getattr(self, name)
            if f.type in ("int", int):
                if isinstance(v, bool) or not isinstance(v, int):
                    errors.append(f"{name}: expected an integer, got {v!r}")
                elif v < (0 if name == "seed" else 1):
                    errors.append(f"{name}: must be {'>= 0' if name == 'seed' else 'positive'}, got {v}")
            else:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                    errors.append(f"{name}: expected a positive number, got {v!r}")
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def param_shapes(cfg: ModelConfig, V: int) -> dict[str, tuple[int, ...]]:
    e, h, d, a = cfg.d_emb, cfg.d_hid, cfg.d_dec, cfg.d_att
    return {
        "emb": (V, e),
        "enc_f_W": (e, 3 * h), "enc_f_U": (h, 3 * h), "enc_f_b": (3 * h,),
        "enc_b_W": (e, 3 * h), "enc_b_U": (h, 3 * h), "enc_b_b": (3 * h,),
        "init_W": (2 * h, d), "init_b": (d,),
        "dec_W": (e + 2 * h, 3 * d), "dec_U": (d, 3 * d), "dec_b": (3 * d,),
        "att_Wh": (2 * h, a), "att_Ws": (d, a), "att_b": (a,), "att_v": (a,),
        "out_W": (d + 2 * h, V), "out_b": (V,),
        "gate_w": (d + 2 * h + e,), "gate_b": (1,),
    }


def init_params(cfg: ModelConfig, V: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in param_shapes(cfg, V).items():
        if name.endswith("_b") or name == "gate_b":
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-cfg.init_scale, cfg.init_scale, size=shape)
    return params


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------- batching


@dataclass
class Batch:
    src: np.ndarray        # (B, S) vocab ids, OOV -> UNK
    src_ext: np.ndarray    # (B, S) extended ids for copying
    src_mask: np.ndarray   # (B, S)
    tgt_in: np.ndarray     # (B, T) previous-token ids (BOS first)
    tgt_out: np.ndarray    # (B, T) extended target ids, EOS last
    tgt_mask: np.ndarray   # (B, T)
    oovs: list = field(default_factory=list)  # per row: list of OOV source words


def extend_source(vocab: Vocab, tokens: Sequence[str]):
    """Vocab ids, extended ids and the row's OOV list."""
    oov: list[str] = []
    ids, ext = [], []
    for t in tokens:
        i = vocab.stoi.get(t)
        if i is None:
            if t not in oov:
                oov.append(t)
            ids.append(vocab.unk)
            ext.append(len(vocab) + oov.index(t))
        else:
            ids.append(i)
            ext.append(i)
    return ids, ext, oov


def make_batch(vocab: Vocab, pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> Batch:
    """Pad (input tokens, target tokens) pairs; EOS is appended to targets."""
    B = len(pairs)
    S = max(len(p[0]) for p in pairs)
    T = max(len(p[1]) for p in pairs) + 1
    src = np.zeros((B, S), dtype=np.int64)
    src_ext = np.zeros((B, S), dtype=np.int64)
    src_mask = np.zeros((B, S))
    tgt_in = np.zeros((B, T), dtype=np.int64)
    tgt_out = np.zeros((B, T), dtype=np.int64)
    tgt_mask = np.zeros((B, T))
    oovs = []
    V = len(vocab)
    for b, (inp, tgt) in enumerate(pairs):
        ids, ext, oov = extend_source(vocab, inp)
        src[b, :len(ids)] = ids
        src_ext[b, :len(ext)] = ext
        src_mask[b, :len(ids)] = 1
        out = []
        for t in tgt:
            if t in vocab.stoi:
                out.append(vocab.stoi[t])
            elif t in oov:
                out.append(V + oov.index(t))
            else:
                out.append(vocab.unk)
        out.append(vocab.eos)
        prev = [vocab.bos] + [i if i < V else vocab.unk for i in out[:-1]]
        tgt_in[b, :len(prev)] = prev
        tgt_out[b, :len(out)] = out
        tgt_mask[b, :len(out)] = 1
        oovs.append(oov)
    return Batch(src, src_ext, src_mask, tgt_in, tgt_out, tgt_mask, oovs)


# ---------------------------------------------------------------- GRU


def _gru_step(gx, h, U, d):
    """gx is the precomputed input projection (with bias)."""
    gh = h @ U
    z = _sigmoid(gx[:, :d] + gh[:, :d])
    r = _sigmoid(gx[:, d:2 * d] + gh[:, d:2 * d])
    ghn = gh[:, 2 * d:]
    n = np.tanh(gx[:, 2 * d:] + r * ghn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (h, z, r, n, ghn)


def _gru_step_back(dh_new, cache, U, d, dU):
    """Returns (dgx, dh_prev); accumulates into dU."""
    h, z, r, n, ghn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dan = dn * (1.0 - n * n)
    dar = dan * ghn * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dgx = np.concatenate([daz, dar, dan], axis=1)
    dgh = np.concatenate([daz, dar, dan * r], axis=1)
    dU += h.T @ dgh
    dh += dgh @ U.T
    return dgx, dh


def _run_gru(X, mask, W, U, b, d, reverse=False):
    B, S, _ = X.shape
    GX = X @ W + b
    h = np.zeros((B, d))
    out = np.zeros((B, S, d))
    caches = [None] * S
    steps = range(S - 1, -1, -1) if reverse else range(S)
    for t in steps:
        h_new, cache = _gru_step(GX[:, t], h, U, d)
        m = mask[:, t:t + 1]
        h = m * h_new + (1.0 - m) * h
        out[:, t] = h
        caches[t] = cache
    return out, caches


def _run_gru_back(dOut, X, mask, caches, W, U, d, grads, prefix, reverse=False):
    B, S, _ = X.shape
    dGX = np.zeros((B, S, 3 * d))
    dU = grads[prefix + "_U"]
    dh = np.zeros((B, d))
    steps = range(S) if reverse else range(S - 1, -1, -1)
    for t in steps:
        dh = dh + dOut[:, t]
        m = mask[:, t:t + 1]
        dgx, dh_prev = _gru_step_back(m * dh, caches[t], U, d, dU)
        dGX[:, t] = dgx
        dh = dh_prev + (1.0 - m) * dh
    grads[prefix + "_W"] += np.einsum("bsi,bsj->ij", X, dGX)
    grads[prefix + "_b"] += dGX.sum(axis=(0, 1))
    return dGX @ W.T  # dX


# ---------------------------------------------------------------- encoder


def encode_batch(p, src, src_mask, cfg: ModelConfig):
    h = cfg.d_hid
    X = p["emb"][src]
    Hf, cf = _run_gru(X, src_mask, p["enc_f_W"], p["enc_f_U"], p["enc_f_b"], h)
    Hb, cb = _run_gru(X, src_mask, p["enc_b_W"], p["enc_b_U"], p["enc_b_b"], h, reverse=True)
    H = np.concatenate([Hf, Hb], axis=2)
    return H, (X, cf, cb)


def _attend(p, H, Pproj, mask, s):
    q = s @ p["att_Ws"] + p["att_b"]
    A = np.tanh(Pproj + q[:, None, :])
    e = A @ p["att_v"]
    e = np.where(mask > 0, e, _NEG)
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e) * (mask > 0)
    alpha = w / w.sum(axis=1, keepdims=True)
    ctx = np.einsum("bs,bsk->bk", alpha, H)
    return alpha, ctx, A


# ---------------------------------------------------------------- loss


def loss_and_grads(p, batch: Batch, cfg: ModelConfig, V: int, need_grads: bool = True):
    """Mean token cross-entropy over the batch and its gradient.

    Returns ``(loss, grads, token_logp)`` where ``token_logp`` is (B, T)
    with zeros at padding.
    """
    B, S = batch.src.shape
    T = batch.tgt_out.shape[1]
    h2, d, de = 2 * cfg.d_hid, cfg.d_dec, cfg.d_emb
    H, enc_cache = encode_batch(p, batch.src, batch.src_mask, cfg)
    Pproj = H @ p["att_Wh"]
    pre0 = H[:, 0] @ p["init_W"] + p["init_b"]
    s = np.tanh(pre0)
    ctx = np.zeros((B, h2))
    Ey = p["emb"][batch.tgt_in]  # (B, T, de)
    Wd_e, Wd_c = p["dec_W"][:de], p["dec_W"][de:]
    GXe = Ey @ Wd_e + p["dec_b"]
    n_tok = batch.tgt_mask.sum()
    rows = np.arange(B)
    copy_hit = batch.src_ext[:, None, :] == batch.tgt_out[:, :, None]  # (B, T, S)

    steps = []
    logp = np.zeros((B, T))
    for t in range(T):
        ctx_prev = ctx
        gx = GXe[:, t] + ctx_prev @ Wd_c
        s_new, gcache = _gru_step(gx, s, p["dec_U"], d)
        alpha, ctx, A = _attend(p, H, Pproj, batch.src_mask, s_new)
        o = np.concatenate([s_new, ctx], axis=1)
        logits = o @ p["out_W"] + p["out_b"]
        logits -= logits.max(axis=1, keepdims=True)
        pg = np.exp(logits)
        pg /= pg.sum(axis=1, keepdims=True)
        gin = np.concatenate([o, Ey[:, t]], axis=1)
        g = _sigmoid(gin @ p["gate_w"] + p["gate_b"][0])
        y = batch.tgt_out[:, t]
        in_vocab = y < V
        pg_y = np.where(in_vocab, pg[rows, np.minimum(y, V - 1)], 0.0)
        hit = copy_hit[:, t]
        cp_y = (alpha * hit).sum(axis=1)
        prob = g * pg_y + (1.0 - g) * cp_y
        lp = np.log(np.maximum(prob, 1e-300))
        logp[:, t] = lp * batch.tgt_mask[:, t]
        steps.append((s, s_new, gcache, ctx_prev, alpha, ctx, A, o, pg, gin, g, y, in_vocab,
                      pg_y, hit, cp_y, prob))
        s = s_new
    loss = -logp.sum() / n_tok
    if not need_grads:
        return loss, None, logp

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dH = np.zeros_like(H)
    dP = np.zeros_like(Pproj)
    dEy = np.zeros_like(Ey)
    ds_next = np.zeros((B, d))
    dctx_next = np.zeros((B, h2))  # gradient flowing into ctx of step t via step t+1's input
    for t in range(T - 1, -1, -1):
        (s_prev, s_new, gcache, ctx_prev, alpha, ctx, A, o, pg, gin, g, y, in_vocab,
         pg_y, hit, cp_y, prob) = steps[t]
        w = batch.tgt_mask[:, t] / n_tok
        dprob = -w / np.maximum(prob, 1e-300)
        # mixture
        dpg_y = dprob * g
        dg = dprob * (pg_y - cp_y)
        dalpha = (dprob * (1.0 - g))[:, None] * hit
        # generation softmax restricted to the target component
        dlogits = -pg * (dpg_y * pg_y)[:, None]
        iv = np.flatnonzero(in_vocab)
        dlogits[iv, y[iv]] += dpg_y[iv] * pg_y[iv]
        grads["out_W"] += o.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        do = dlogits @ p["out_W"].T
        # gate
        dgpre = dg * g * (1.0 - g)
        grads["gate_w"] += gin.T @ dgpre
        grads["gate_b"][0] += dgpre.sum()
        dgin = dgpre[:, None] * p["gate_w"][None, :]
        do += dgin[:, : d + h2]
        dEy[:, t] += dgin[:, d + h2:]
        ds = do[:, :d] + ds_next
        dctx = do[:, d:] + dctx_next
        # context and attention
        dH += alpha[:, :, None] * dctx[:, None, :]
        dalpha += np.einsum("bk,bsk->bs", dctx, H)
        dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        grads["att_v"] += np.einsum("bs,bsa->a", dscore, A)
        dApre = dscore[:, :, None] * p["att_v"][None, None, :] * (1.0 - A * A)
        dP += dApre
        dq = dApre.sum(axis=1)
        grads["att_Ws"] += s_new.T @ dq
        grads["att_b"] += dq.sum(axis=0)
        ds += dq @ p["att_Ws"].T
        # decoder GRU
        dgx, ds_prev = _gru_step_back(ds, gcache, p["dec_U"], d, grads["dec_U"])
        grads["dec_b"] += dgx.sum(axis=0)
        grads["dec_W"][:de] += Ey[:, t].T @ dgx
        grads["dec_W"][de:] += ctx_prev.T @ dgx
        dEy[:, t] += dgx @ Wd_e.T
        dctx_next = dgx @ Wd_c.T
        ds_next = ds_prev
    # initial state
    dpre0 = ds_next * (1.0 - np.tanh(pre0) ** 2)
    grads["init_W"] += H[:, 0].T @ dpre0
    grads["init_b"] += dpre0.sum(axis=0)
    dH[:, 0] += dpre0 @ p["init_W"].T
    grads["att_Wh"] += np.einsum("bsk,bsa->ka", H, dP)
    dH += dP @ p["att_Wh"].T
    np.add.at(grads["emb"], batch.tgt_in, dEy)
    # encoder
    X, cf, cb = enc_cache
    hd = cfg.d_hid
    dX = _run_gru_back(dH[:, :, :hd], X, batch.src_mask, cf, p["enc_f_W"], p["enc_f_U"], hd,
                       grads, "enc_f")
    dX += _run_gru_back(dH[:, :, hd:], X, batch.src_mask, cb, p["enc_b_W"], p["enc_b_U"], hd,
                        grads, "enc_b", reverse=True)
    np.add.at(grads["emb"], batch.src, dX * batch.src_mask[:, :, None])
    return loss, grads, logp
