"""Incremental (token-at-a-time) decoding for the denoiser.

The encoder runs once per hypothesis; decoding keeps per-layer key/value
caches so each step costs one row of attention.  States are batched over
beam candidates and support reordering, which beam search needs.  The
step path must agree with the teacher-forced forward pass (guarded by a
unit test comparing total log-probs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Vocabulary, DEFAULT_VOCAB
from .model import (
    DLMParameters,
    MASK_VALUE,
    _attention,
    _layer_norm,
    _mlp,
    _split_heads,
    sinusoid_table,
)


@dataclass
class EncodedHypothesis:
    enc: np.ndarray  # (S, d) encoder output
    k_cross: list[np.ndarray]  # per decoder layer, (H, S, dh)
    v_cross: list[np.ndarray]


def encode_hypothesis(
    params: DLMParameters, hypothesis: str, vocab: Vocabulary = DEFAULT_VOCAB
) -> EncodedHypothesis:
    p = params.tensors
    cfg = params.config
    ids = [vocab.bos_id, *vocab.encode(hypothesis).tolist(), vocab.eos_id]
    if len(ids) > cfg.max_seq_len:
        raise ValueError("hypothesis exceeds max_seq_len")
    dtype = p["embed"].dtype
    S = len(ids)
    sin = sinusoid_table(S, cfg.d_model, dtype)
    scale = np.asarray(np.sqrt(cfg.d_model), dtype=dtype)

    x = p["embed"][np.asarray(ids)][None] * scale + sin[None]
    scratch: dict = {}
    for i in range(cfg.n_encoder_layers):
        pre = f"enc{i}"
        h, _ = _layer_norm(x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        x = x + _attention(p, f"{pre}.self", h, None, None, cfg.n_heads, scratch)
        h, _ = _layer_norm(x, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        x = x + _mlp(p, f"{pre}.mlp", h, scratch)
    enc, _ = _layer_norm(x, p["enc_ln.g"], p["enc_ln.b"])
    enc = enc[0]

    k_cross, v_cross = [], []
    for i in range(cfg.n_decoder_layers):
        pre = f"dec{i}.cross"
        k = enc @ p[f"{pre}.wk"] + p[f"{pre}.bk"]
        v = enc @ p[f"{pre}.wv"] + p[f"{pre}.bv"]
        k_cross.append(_split_heads(k[None], cfg.n_heads)[0])
        v_cross.append(_split_heads(v[None], cfg.n_heads)[0])
    return EncodedHypothesis(enc, k_cross, v_cross)


class DecoderState:
    """Batched decoder caches for n parallel candidates over one encoded
    hypothesis."""

    def __init__(self, params: DLMParameters, encoded: EncodedHypothesis,
                 n_candidates: int, max_len: int):
        cfg = params.config
        dtype = params.tensors["embed"].dtype
        dh = cfg.d_model // cfg.n_heads
        self.params = params
        self.encoded = encoded
        self.t = 0
        self.n = n_candidates
        self.max_len = max_len
        self.k_self = [np.zeros((n_candidates, cfg.n_heads, max_len, dh), dtype=dtype)
                       for _ in range(cfg.n_decoder_layers)]
        self.v_self = [np.zeros((n_candidates, cfg.n_heads, max_len, dh), dtype=dtype)
                       for _ in range(cfg.n_decoder_layers)]
        self.sin = sinusoid_table(max_len, cfg.d_model, dtype)

    def select(self, indices: np.ndarray) -> None:
        """Reorder candidate rows (beam bookkeeping)."""
        for i in range(len(self.k_self)):
            self.k_self[i] = self.k_self[i][indices]
            self.v_self[i] = self.v_self[i][indices]
        self.n = len(indices)

    def step(self, tokens: np.ndarray) -> np.ndarray:
        """Feed one input token per candidate; returns next-symbol
        log-probs (n, n_out)."""
        p = self.params.tensors
        cfg = self.params.config
        if self.t >= self.max_len:
            raise ValueError("decoder state exhausted")
        H = cfg.n_heads
        dtype = p["embed"].dtype
        scale = np.asarray(np.sqrt(cfg.d_model), dtype=dtype)

        y = p["embed"][tokens] * scale + self.sin[self.t]  # (n, d)
        y = y[:, None, :]  # (n, 1, d)
        for i in range(cfg.n_decoder_layers):
            pre = f"dec{i}"
            h, _ = _layer_norm(y, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
            q = _split_heads(h @ p[f"{pre}.self.wq"] + p[f"{pre}.self.bq"], H)
            k_new = _split_heads(h @ p[f"{pre}.self.wk"] + p[f"{pre}.self.bk"], H)
            v_new = _split_heads(h @ p[f"{pre}.self.wv"] + p[f"{pre}.self.bv"], H)
            self.k_self[i][:, :, self.t : self.t + 1] = k_new
            self.v_self[i][:, :, self.t : self.t + 1] = v_new
            k = self.k_self[i][:, :, : self.t + 1]
            v = self.v_self[i][:, :, : self.t + 1]
            a = _softmax_attn(q, k, v)
            y = y + _merge(a) @ p[f"{pre}.self.wo"] + p[f"{pre}.self.bo"]

            h, _ = _layer_norm(y, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
            q = _split_heads(h @ p[f"{pre}.cross.wq"] + p[f"{pre}.cross.bq"], H)
            a = _softmax_attn(q, self.encoded.k_cross[i][None], self.encoded.v_cross[i][None])
            y = y + _merge(a) @ p[f"{pre}.cross.wo"] + p[f"{pre}.cross.bo"]

            h, _ = _layer_norm(y, p[f"{pre}.ln3.g"], p[f"{pre}.ln3.b"])
            r = np.maximum(h @ p[f"{pre}.mlp.w1"] + p[f"{pre}.mlp.b1"], 0.0)
            y = y + r @ p[f"{pre}.mlp.w2"] + p[f"{pre}.mlp.b2"]

        out, _ = _layer_norm(y, p["dec_ln.g"], p["dec_ln.b"])
        w_out = p["embed"][: cfg.n_out].T if cfg.tie_embeddings else p["out.w"]
        logits = out[:, 0, :] @ w_out + p["out.b"]
        shifted = logits - logits.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        self.t += 1
        return shifted - logz


def _softmax_attn(q, k, v):
    dh = q.shape[-1]
    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return (e / e.sum(axis=-1, keepdims=True)) @ v


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)
