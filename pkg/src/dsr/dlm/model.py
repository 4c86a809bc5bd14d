"""Character-level encoder-decoder denoiser: numpy forward pass, manual
backward pass, and incremental decoding state for inference.

Architecture: token embedding (scaled by sqrt(d_model)) plus sinusoidal
positions, pre-layer-norm transformer blocks (encoder: self-attention +
ReLU MLP; decoder: causal self-attention, cross-attention, MLP), a final
layer norm on each side, and an output projection to chars + EOS with
log-softmax per target position.

Token spaces (see corpus.Vocabulary): inputs use chars + bos/eos/pad;
outputs are the first n_out = n_chars + 1 ids (chars then EOS), so tied
input/output embeddings are a leading slice of the embedding table.

Everything is dtype-generic: parameters are float32, but the forward /
backward pass runs in whatever dtype the parameter dict holds (the
gradient check recasts to float64).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..corpus import Vocabulary, DEFAULT_VOCAB
from ..rng import Rng

LN_EPS = 1e-5
MASK_VALUE = -1e30


@dataclass
class DLMConfig:
    d_model: int = 128
    n_heads: int = 4
    mlp_hidden: int = 512
    n_encoder_layers: int = 4
    n_decoder_layers: int = 1
    max_seq_len: int = 512
    dropout_rate: float = 0.1
    seed: int = 0
    vocab_size: int = DEFAULT_VOCAB.n_dlm
    tie_embeddings: bool = False

    def validate(self, allow_shallow_encoder: bool = False) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_encoder_layers < self.n_decoder_layers and not allow_shallow_encoder:
            raise ValueError(
                "encoder should be at least as deep as the decoder "
                "(pass allow_shallow_encoder=True to override)"
            )
        if min(self.d_model, self.n_heads, self.mlp_hidden, self.max_seq_len,
               self.n_encoder_layers, self.n_decoder_layers) < 1:
            raise ValueError("all dimensions must be positive")

    @property
    def n_out(self) -> int:
        """Output classes: chars + EOS."""
        return self.vocab_size - 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DLMParameters:
    config: DLMConfig
    tensors: dict[str, np.ndarray]

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def astype(self, dtype) -> "DLMParameters":
        return DLMParameters(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


def _tensor_shapes(cfg: DLMConfig) -> list[tuple[str, tuple]]:
    d, m = cfg.d_model, cfg.mlp_hidden
    shapes: list[tuple[str, tuple]] = [("embed", (cfg.vocab_size, d))]

    def block(prefix: str, cross: bool):
        names = ["self"] + (["cross"] if cross else [])
        k = 1
        for name in names:
            shapes.append((f"{prefix}.ln{k}.g", (d,)))
            shapes.append((f"{prefix}.ln{k}.b", (d,)))
            for w in ("wq", "wk", "wv", "wo"):
                shapes.append((f"{prefix}.{name}.{w}", (d, d)))
            for b in ("bq", "bk", "bv", "bo"):
                shapes.append((f"{prefix}.{name}.{b}", (d,)))
            k += 1
        shapes.append((f"{prefix}.ln{k}.g", (d,)))
        shapes.append((f"{prefix}.ln{k}.b", (d,)))
        shapes.append((f"{prefix}.mlp.w1", (d, m)))
        shapes.append((f"{prefix}.mlp.b1", (m,)))
        shapes.append((f"{prefix}.mlp.w2", (m, d)))
        shapes.append((f"{prefix}.mlp.b2", (d,)))

    for i in range(cfg.n_encoder_layers):
        block(f"enc{i}", cross=False)
    shapes.append(("enc_ln.g", (d,)))
    shapes.append(("enc_ln.b", (d,)))
    for i in range(cfg.n_decoder_layers):
        block(f"dec{i}", cross=True)
    shapes.append(("dec_ln.g", (d,)))
    shapes.append(("dec_ln.b", (d,)))
    if not cfg.tie_embeddings:
        shapes.append(("out.w", (d, cfg.n_out)))
    shapes.append(("out.b", (cfg.n_out,)))
    return shapes


def init_model(cfg: DLMConfig, seed: int | None = None) -> DLMParameters:
    """Scaled-uniform init: U[-1, 1] / sqrt(fan_in) for weight matrices
    and the embedding (fan_in = d_model), zeros for biases, ones for
    layer-norm gains."""
    cfg.validate()
    rng = Rng(cfg.seed if seed is None else seed).derive("init")
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_shapes(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            t = np.ones(shape)
        elif leaf.startswith("b"):
            t = np.zeros(shape)
        elif leaf == "embed" or name == "embed":
            t = (rng.uniform(int(np.prod(shape))) * 2 - 1).reshape(shape) / np.sqrt(cfg.d_model)
        else:
            fan_in = shape[0]
            t = (rng.uniform(int(np.prod(shape))) * 2 - 1).reshape(shape) / np.sqrt(fan_in)
        tensors[name] = t.astype(np.float32)
    return DLMParameters(cfg, tensors)


def sinusoid_table(max_len: int, d: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    half = d // 2
    freqs = 1.0 / (10000.0 ** (np.arange(half, dtype=np.float64) / half))
    angles = pos * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)[:, :d].astype(dtype)


class DropoutStream:
    """Deterministic dropout masks drawn in forward-pass order."""

    def __init__(self, rng: Rng, rate: float):
        self.rng = rng
        self.rate = rate

    def mask(self, shape) -> np.ndarray | None:
        if self.rate <= 0.0:
            return None
        # threshold raw 64-bit draws directly; keep-prob = 1 - rate
        cut = np.uint64(int(self.rate * 2.0**64))
        keep = self.rng.u64(int(np.prod(shape))).reshape(shape) >= cut
        out = keep.astype(np.float32)
        out *= 1.0 / (1.0 - self.rate)
        return out


def _dropout(x, drop: DropoutStream | None, cache: dict, key: str):
    if drop is None:
        return x
    m = drop.mask(x.shape)
    if m is None:
        return x
    m = m.astype(x.dtype)
    cache[key] = m
    return x * m


def _linear(x, w, b=None):
    """x @ w (+ b) with the leading axes flattened for one BLAS call."""
    shape = x.shape
    out = x.reshape(-1, shape[-1]) @ w
    if b is not None:
        out += b
    return out.reshape(*shape[:-1], w.shape[1])


def _scatter_rows(out: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """out[ids[k]] += rows[k], grouped with reduceat (np.add.at is slow)."""
    flat_ids = ids.reshape(-1)
    flat_rows = rows.reshape(-1, rows.shape[-1])
    order = np.argsort(flat_ids, kind="stable")
    sorted_ids = flat_ids[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(sorted_ids)) + 1))
    sums = np.add.reduceat(flat_rows[order], starts, axis=0)
    out[sorted_ids[starts]] += sums


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, ln_cache):
    xhat, inv = ln_cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    d = xhat.shape[-1]
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _attention(p, name, x_q, x_kv, bias, n_heads, cache):
    """Multi-head attention; x_kv of None means self-attention.  bias is
    an additive mask broadcastable to (B, 1, Tq, Tk) with MASK_VALUE at
    banned positions."""
    if x_kv is None:
        x_kv = x_q
    W = lambda s: p[f"{name}.{s}"]
    q = _linear(x_q, W("wq"), W("bq"))
    k = _linear(x_kv, W("wk"), W("bk"))
    v = _linear(x_kv, W("wv"), W("bv"))
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    dh = qh.shape[-1]
    scores = qh @ kh.transpose(0, 1, 3, 2)
    scores *= 1.0 / np.sqrt(dh)
    if bias is not None:
        scores += bias
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = _merge_heads(attn @ vh)
    out = _linear(ctx, W("wo"), W("bo"))
    cache[name] = (x_q, x_kv, qh, kh, vh, attn, ctx)
    return out


def _attention_backward(p, name, dout, n_heads, cache, grads):
    x_q, x_kv, qh, kh, vh, attn, ctx = cache[name]
    W = lambda s: p[f"{name}.{s}"]
    g = lambda s: grads.setdefault(f"{name}.{s}", np.zeros_like(p[f"{name}.{s}"]))

    flat = lambda t: np.ascontiguousarray(t).reshape(-1, t.shape[-1])
    g("wo")[...] += flat(ctx).T @ flat(dout)
    g("bo")[...] += dout.sum(axis=(0, 1))
    dctx = _linear(dout, W("wo").T)
    dctx_h = _split_heads(dctx, n_heads)

    dattn = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx_h
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dh = qh.shape[-1]
    dscores *= 1.0 / np.sqrt(dh)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
    g("wq")[...] += flat(x_q).T @ flat(dq)
    g("wk")[...] += flat(x_kv).T @ flat(dk)
    g("wv")[...] += flat(x_kv).T @ flat(dv)
    g("bq")[...] += dq.sum(axis=(0, 1))
    g("bk")[...] += dk.sum(axis=(0, 1))
    g("bv")[...] += dv.sum(axis=(0, 1))
    dx_q = _linear(dq, W("wq").T)
    dx_kv = _linear(dk, W("wk").T)
    dx_kv += _linear(dv, W("wv").T)
    return dx_q, dx_kv


def _mlp(p, name, x, cache):
    h = _linear(x, p[f"{name}.w1"], p[f"{name}.b1"])
    r = np.maximum(h, 0.0)
    cache[name] = (x, h, r)
    return _linear(r, p[f"{name}.w2"], p[f"{name}.b2"])


def _mlp_backward(p, name, dout, cache, grads):
    x, h, r = cache[name]
    flat = lambda t: t.reshape(-1, t.shape[-1])
    g = lambda s: grads.setdefault(f"{name}.{s}", np.zeros_like(p[f"{name}.{s}"]))
    g("w2")[...] += flat(r).T @ flat(dout)
    g("b2")[...] += dout.sum(axis=(0, 1))
    dr = _linear(dout, p[f"{name}.w2"].T)
    dr *= h > 0
    g("w1")[...] += flat(x).T @ flat(dr)
    g("b1")[...] += dr.sum(axis=(0, 1))
    return _linear(dr, p[f"{name}.w1"].T)


def _ln_sub(p, prefix, k, x, cache):
    out, ln_cache = _layer_norm(x, p[f"{prefix}.ln{k}.g"], p[f"{prefix}.ln{k}.b"])
    cache[f"{prefix}.ln{k}"] = ln_cache
    return out


def _ln_sub_backward(p, prefix, k, dy, cache, grads):
    dx, dg, db = _layer_norm_backward(dy, p[f"{prefix}.ln{k}.g"], cache[f"{prefix}.ln{k}"])
    grads.setdefault(f"{prefix}.ln{k}.g", np.zeros_like(p[f"{prefix}.ln{k}.g"]))[...] += dg
    grads.setdefault(f"{prefix}.ln{k}.b", np.zeros_like(p[f"{prefix}.ln{k}.b"]))[...] += db
    return dx


@dataclass
class Batch:
    """Padded id arrays for one forward/backward pass."""

    src: np.ndarray  # (B, S) encoder input: BOS hyp EOS PAD*
    src_valid: np.ndarray  # (B, S) bool
    tgt_in: np.ndarray  # (B, T) decoder input: BOS target PAD*
    tgt_out: np.ndarray  # (B, T) next-symbol ids: target EOS PAD*
    tgt_valid: np.ndarray  # (B, T) bool, loss positions

    @property
    def n_tokens(self) -> int:
        return int(self.tgt_valid.sum())


def make_batch(pairs: list[tuple[str, str]], vocab: Vocabulary, max_seq_len: int) -> Batch:
    """Pack (hypothesis, target) strings, BOS/EOS framed, PAD padded."""
    bos, eos, pad = vocab.bos_id, vocab.eos_id, vocab.pad_id
    srcs, tins, touts = [], [], []
    for hyp, tgt in pairs:
        h = vocab.encode(hyp)
        t = vocab.encode(tgt)
        if len(h) + 2 > max_seq_len or len(t) + 1 > max_seq_len:
            raise ValueError("pair exceeds max_seq_len")
        srcs.append([bos, *h.tolist(), eos])
        tins.append([bos, *t.tolist()])
        touts.append([*t.tolist(), eos])
    S = max(len(s) for s in srcs)
    T = max(len(t) for t in tins)
    B = len(pairs)
    src = np.full((B, S), pad, dtype=np.int64)
    tin = np.full((B, T), pad, dtype=np.int64)
    tout = np.full((B, T), pad, dtype=np.int64)
    src_valid = np.zeros((B, S), dtype=bool)
    tgt_valid = np.zeros((B, T), dtype=bool)
    for i, (s, ti, to) in enumerate(zip(srcs, tins, touts)):
        src[i, : len(s)] = s
        src_valid[i, : len(s)] = True
        tin[i, : len(ti)] = ti
        tout[i, : len(to)] = to
        tgt_valid[i, : len(to)] = True
    return Batch(src, src_valid, tin, tout, tgt_valid)


def forward(params: DLMParameters, batch: Batch, drop: DropoutStream | None = None):
    """Teacher-forced pass.  Returns (log-probs (B, T, n_out), cache).

    The cache holds every intermediate needed by backward()."""
    p = params.tensors
    cfg = params.config
    dtype = p["embed"].dtype
    cache: dict = {"batch": batch}
    H = cfg.n_heads
    scale = np.asarray(np.sqrt(cfg.d_model), dtype=dtype)

    B, S = batch.src.shape
    T = batch.tgt_in.shape[1]
    sin = sinusoid_table(max(S, T), cfg.d_model, dtype)

    src_bias = np.where(batch.src_valid[:, None, None, :], 0.0, MASK_VALUE).astype(dtype)
    causal = np.triu(np.full((T, T), MASK_VALUE, dtype=dtype), k=1)[None, None]
    cache["src_bias"] = src_bias

    x = p["embed"][batch.src] * scale + sin[:S]
    x = _dropout(x, drop, cache, "drop.src_embed")
    for i in range(cfg.n_encoder_layers):
        pre = f"enc{i}"
        a = _attention(p, f"{pre}.self", _ln_sub(p, pre, 1, x, cache), None, src_bias, H, cache)
        x = x + _dropout(a, drop, cache, f"drop.{pre}.self")
        m = _mlp(p, f"{pre}.mlp", _ln_sub(p, pre, 2, x, cache), cache)
        x = x + _dropout(m, drop, cache, f"drop.{pre}.mlp")
    enc_out, enc_ln_cache = _layer_norm(x, p["enc_ln.g"], p["enc_ln.b"])
    cache["enc_ln"] = enc_ln_cache

    y = p["embed"][batch.tgt_in] * scale + sin[:T]
    y = _dropout(y, drop, cache, "drop.tgt_embed")
    for i in range(cfg.n_decoder_layers):
        pre = f"dec{i}"
        a = _attention(p, f"{pre}.self", _ln_sub(p, pre, 1, y, cache), None, causal, H, cache)
        y = y + _dropout(a, drop, cache, f"drop.{pre}.self")
        c = _attention(p, f"{pre}.cross", _ln_sub(p, pre, 2, y, cache), enc_out, src_bias, H, cache)
        y = y + _dropout(c, drop, cache, f"drop.{pre}.cross")
        m = _mlp(p, f"{pre}.mlp", _ln_sub(p, pre, 3, y, cache), cache)
        y = y + _dropout(m, drop, cache, f"drop.{pre}.mlp")
    dec_out, dec_ln_cache = _layer_norm(y, p["dec_ln.g"], p["dec_ln.b"])
    cache["dec_ln"] = dec_ln_cache
    cache["dec_out"] = dec_out

    w_out = p["embed"][: cfg.n_out].T if cfg.tie_embeddings else p["out.w"]
    logits = _linear(dec_out, w_out, p["out.b"])
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logprobs = shifted - logz
    cache["logprobs"] = logprobs
    return logprobs, cache


def total_logprob(logprobs: np.ndarray, batch: Batch) -> float:
    """Sum of true-next-symbol log-probs over valid positions."""
    b_idx, t_idx = np.nonzero(batch.tgt_valid)
    return float(logprobs[b_idx, t_idx, batch.tgt_out[b_idx, t_idx]].sum())


def backward(params: DLMParameters, cache: dict, scale: float = 1.0) -> dict[str, np.ndarray]:
    """Gradients of scale * total_logprob with respect to every tensor."""
    p = params.tensors
    cfg = params.config
    batch: Batch = cache["batch"]
    H = cfg.n_heads
    logprobs = cache["logprobs"]
    dtype = logprobs.dtype
    B, T, C = logprobs.shape
    S = batch.src.shape[1]
    scale = np.asarray(scale, dtype=dtype)
    sin_scale = np.asarray(np.sqrt(cfg.d_model), dtype=dtype)

    grads: dict[str, np.ndarray] = {}
    for name in p:
        grads[name] = np.zeros_like(p[name])

    # d(total logprob)/dlogits = onehot - softmax, on valid positions
    probs = np.exp(logprobs)
    dlogits = -probs
    b_idx, t_idx = np.nonzero(batch.tgt_valid)
    dlogits[b_idx, t_idx, batch.tgt_out[b_idx, t_idx]] += 1.0
    dlogits *= batch.tgt_valid[:, :, None]
    dlogits *= scale

    dec_out = cache["dec_out"]
    flat = lambda t: t.reshape(-1, t.shape[-1])
    w_out = p["embed"][: cfg.n_out].T if cfg.tie_embeddings else p["out.w"]
    if cfg.tie_embeddings:
        grads["embed"][: cfg.n_out] += (flat(dec_out).T @ flat(dlogits)).T
    else:
        grads["out.w"] += flat(dec_out).T @ flat(dlogits)
    grads["out.b"] += dlogits.sum(axis=(0, 1))
    dy = _linear(dlogits, np.ascontiguousarray(w_out.T))

    dy, dg, db = _layer_norm_backward(dy, p["dec_ln.g"], cache["dec_ln"])
    grads["dec_ln.g"] += dg
    grads["dec_ln.b"] += db

    denc_out = np.zeros((B, S, cfg.d_model), dtype=dtype)

    def drop_back(d, key):
        m = cache.get(key)
        return d if m is None else d * m

    for i in reversed(range(cfg.n_decoder_layers)):
        pre = f"dec{i}"
        dm = drop_back(dy, f"drop.{pre}.mlp")
        dln3 = _mlp_backward(p, f"{pre}.mlp", dm, cache, grads)
        dy = dy + _ln_sub_backward(p, pre, 3, dln3, cache, grads)
        dc = drop_back(dy, f"drop.{pre}.cross")
        dq, dkv = _attention_backward(p, f"{pre}.cross", dc, H, cache, grads)
        denc_out += dkv
        dy = dy + _ln_sub_backward(p, pre, 2, dq, cache, grads)
        da = drop_back(dy, f"drop.{pre}.self")
        dq, dkv = _attention_backward(p, f"{pre}.self", da, H, cache, grads)
        dy = dy + _ln_sub_backward(p, pre, 1, dq + dkv, cache, grads)
    dy = drop_back(dy, "drop.tgt_embed")
    _scatter_rows(grads["embed"], batch.tgt_in, dy * sin_scale)

    dx, dg, db = _layer_norm_backward(denc_out, p["enc_ln.g"], cache["enc_ln"])
    grads["enc_ln.g"] += dg
    grads["enc_ln.b"] += db
    for i in reversed(range(cfg.n_encoder_layers)):
        pre = f"enc{i}"
        dm = drop_back(dx, f"drop.{pre}.mlp")
        dln2 = _mlp_backward(p, f"{pre}.mlp", dm, cache, grads)
        dx = dx + _ln_sub_backward(p, pre, 2, dln2, cache, grads)
        da = drop_back(dx, f"drop.{pre}.self")
        dq, dkv = _attention_backward(p, f"{pre}.self", da, H, cache, grads)
        dx = dx + _ln_sub_backward(p, pre, 1, dq + dkv, cache, grads)
    dx = drop_back(dx, "drop.src_embed")
    _scatter_rows(grads["embed"], batch.src, dx * sin_scale)
    return grads


def forward_logprob(
    params: DLMParameters,
    hypothesis: str,
    target: str,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> tuple[np.ndarray, float]:
    """Per-position log-probs of the true next symbols and their sum,
    teacher-forcing the target.  No dropout."""
    batch = make_batch([(hypothesis, target)], vocab, params.config.max_seq_len)
    logprobs, _ = forward(params, batch)
    pos = logprobs[0, np.arange(batch.tgt_out.shape[1]), batch.tgt_out[0]]
    pos = pos[batch.tgt_valid[0]]
    return pos, float(pos.sum())
