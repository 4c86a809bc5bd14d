"""Denoiser training: AdamW with decoupled weight decay, global-norm
gradient clipping, a warmup/constant/step-decay schedule, and dynamic
batches packed to a target-token budget.

The pair stream is consumed once; training stops at max_steps or when
the stream ends.  Pairs longer than max_seq_len are skipped and counted.
All randomness (batch order, dropout) derives from TrainConfig.seed, so
fixed seeds give bit-identical runs on one thread.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from ..corpus import Vocabulary, DEFAULT_VOCAB
from ..rng import Rng
from .checkpoint import save_checkpoint
from .model import (
    Batch,
    DLMConfig,
    DLMParameters,
    DropoutStream,
    backward,
    forward,
    init_model,
    make_batch,
    total_logprob,
)


class DivergenceError(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"training loss became non-finite at step {step}")


@dataclass
class TrainConfig:
    batch_tokens: int = 4000
    peak_lr: float = 1e-3
    warmup_steps: int = 200
    constant_steps: int = 100_000
    decay_rate: float = 0.5
    decay_every: int = 50_000
    weight_decay: float = 0.01
    grad_clip: float = 0.1
    max_steps: int = 1500
    eval_every: int = 500
    seed: int = 0
    log_every: int = 50

    def validate(self) -> None:
        if min(self.batch_tokens, self.warmup_steps, self.constant_steps,
               self.decay_every, self.max_steps, self.eval_every) < 1:
            raise ValueError("schedule fields must be positive")
        if self.peak_lr <= 0 or self.grad_clip <= 0 or self.weight_decay < 0:
            raise ValueError("invalid optimizer settings")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError("decay_rate must be in (0, 1]")


def learning_rate(cfg: TrainConfig, step: int) -> float:
    """Linear warmup -> constant -> step decay; step is 1-based."""
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    s = step - cfg.warmup_steps
    if s <= cfg.constant_steps:
        return cfg.peak_lr
    k = (s - cfg.constant_steps - 1) // cfg.decay_every + 1
    return cfg.peak_lr * cfg.decay_rate**k


class AdamW:
    """Adam with decoupled weight decay applied to every tensor."""

    def __init__(self, tensors: dict[str, np.ndarray],
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors, grads, lr: float, weight_decay: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in tensors.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
            if weight_decay:
                p -= (lr * weight_decay) * p


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def pack_batches(
    pair_iter,
    vocab: Vocabulary,
    max_seq_len: int,
    batch_tokens: int,
    rng: Rng,
    pool_batches: int = 32,
):
    """Yield (Batch, n_skipped_so_far).  Pairs are pooled, sorted by
    target length (little padding waste), cut into <= batch_tokens target
    tokens, and the batch order within each pool is shuffled."""
    skipped = 0
    done = False
    it = iter(pair_iter)
    while not done:
        pool: list[tuple[str, str]] = []
        pool_budget = batch_tokens * pool_batches
        used = 0
        while used < pool_budget:
            try:
                pair = next(it)
            except StopIteration:
                done = True
                break
            hyp, tgt = pair.hypothesis, pair.target
            if len(hyp) + 2 > max_seq_len or len(tgt) + 1 > max_seq_len:
                skipped += 1
                continue
            pool.append((hyp, tgt))
            used += len(tgt) + 1
        if not pool:
            break
        pool.sort(key=lambda p: (len(p[1]), p[1], p[0]))
        batches: list[list[tuple[str, str]]] = []
        current: list[tuple[str, str]] = []
        current_tokens = 0
        for pair in pool:
            cost = len(pair[1]) + 1
            if current and current_tokens + cost > batch_tokens:
                batches.append(current)
                current, current_tokens = [], 0
            current.append(pair)
            current_tokens += cost
        if current:
            batches.append(current)
        rng.shuffle(batches)
        for b in batches:
            yield make_batch(b, vocab, max_seq_len), skipped


def train(
    pair_stream,
    dlm_config: DLMConfig,
    train_config: TrainConfig,
    out_dir: str | None = None,
    val_pairs: list[tuple[str, str]] | None = None,
    vocab: Vocabulary = DEFAULT_VOCAB,
    quiet: bool = False,
) -> tuple[DLMParameters, list[dict]]:
    """Run the training loop; returns (params, metrics rows).

    Writes checkpoints/step{N}.dlmc and metrics.jsonl under out_dir when
    given; evaluates validation greedy WER every eval_every steps."""
    dlm_config.validate()
    train_config.validate()
    params = init_model(dlm_config)
    opt = AdamW(params.tensors)
    rng = Rng(train_config.seed)
    batches = pack_batches(pair_stream, vocab, dlm_config.max_seq_len,
                           train_config.batch_tokens, rng.derive("batching"))

    metrics: list[dict] = []
    ckpt_dir = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    def log(row: dict) -> None:
        metrics.append(row)
        if out_dir:
            with open(os.path.join(out_dir, "metrics.jsonl"), "a", encoding="utf-8") as f:
                f.write(json.dumps(row) + "\n")
        if not quiet:
            print("  " + " ".join(f"{k}={v}" for k, v in row.items()), flush=True)

    def val_wer() -> float | None:
        if not val_pairs:
            return None
        from ..decode import dlm_greedy
        from ..wer import corpus_wer
        scored = [(tgt, dlm_greedy(params, hyp, vocab=vocab)[0]) for hyp, tgt in val_pairs]
        return corpus_wer(scored).wer

    step = 0
    for batch, _ in batches:
        if step >= train_config.max_steps:
            break
        step += 1
        drop = None
        if dlm_config.dropout_rate > 0:
            drop = DropoutStream(rng.derive("dropout", step), dlm_config.dropout_rate)
        logprobs, cache = forward(params, batch, drop)
        n_tok = batch.n_tokens
        total = total_logprob(logprobs, batch)
        loss = -total / n_tok
        if not np.isfinite(loss):
            raise DivergenceError(step)
        grads = backward(params, cache, scale=-1.0 / n_tok)
        clip_global_norm(grads, train_config.grad_clip)
        lr = learning_rate(train_config, step)
        opt.step(params.tensors, grads, lr, train_config.weight_decay)
        for t in params.tensors.values():  # parameters stay finite
            if not np.all(np.isfinite(t)):
                raise DivergenceError(step)

        if step % train_config.log_every == 0 or step == 1:
            log({"step": step, "lr": lr, "loss": round(loss, 6), "val_wer": None})
        if step % train_config.eval_every == 0 or step == train_config.max_steps:
            vw = val_wer()
            log({"step": step, "lr": lr, "loss": round(loss, 6),
                 "val_wer": None if vw is None else round(vw, 6)})
            if ckpt_dir:
                save_checkpoint(params, step, os.path.join(ckpt_dir, f"step{step}.dlmc"))
    if step == 0:
        raise ValueError("pair stream yielded no usable batches")
    if ckpt_dir:
        save_checkpoint(params, step, os.path.join(ckpt_dir, "final.dlmc"))
    return params, metrics
