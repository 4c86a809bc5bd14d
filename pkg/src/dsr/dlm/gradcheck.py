"""Finite-difference verification of the manual backward pass.

Compares analytic gradients of the total log-prob against central
differences (step 1e-3) in float64, on randomly sampled coordinates
covering every tensor.  Coordinates where both gradients vanish
(e.g. padding rows, unused embedding rows) are excluded from the
relative-error ratio.
"""

from __future__ import annotations

import numpy as np

from ..corpus import Vocabulary, DEFAULT_VOCAB
from ..rng import Rng
from .model import DLMConfig, backward, forward, init_model, make_batch, total_logprob

TINY_CONFIG = DLMConfig(
    d_model=8,
    n_heads=2,
    mlp_hidden=16,
    n_encoder_layers=1,
    n_decoder_layers=1,
    max_seq_len=32,
    dropout_rate=0.0,
)


def grad_check(
    config: DLMConfig | None = None,
    seed: int = 0,
    n_coords: int = 240,
    fd_step: float = 1e-3,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> float:
    """Returns the max relative error over sampled coordinates."""
    cfg = config or TINY_CONFIG
    if sum(int(np.prod(s)) for _, s in _shapes(cfg)) > 10_000:
        raise ValueError("config too large for finite differences")
    params = init_model(cfg, seed=seed).astype(np.float64)

    # short pairs exercising repeats, spaces, and an empty hypothesis
    batch = make_batch(
        [("abc ab", "abba cd"), ("", "ea"), ("dd d", "dad")], vocab, cfg.max_seq_len
    )

    def objective() -> float:
        logprobs, _ = forward(params, batch)
        return total_logprob(logprobs, batch)

    logprobs, cache = forward(params, batch)
    analytic = backward(params, cache, scale=1.0)

    rng = Rng(seed).derive("gradcheck-coords")
    names = list(params.tensors)
    per_tensor = max(2, -(-n_coords // len(names)))
    max_rel = 0.0
    checked = 0
    for name in names:
        t = params.tensors[name]
        flat_n = t.size
        for _ in range(min(per_tensor, flat_n)):
            idx = rng.integers(flat_n)
            orig = t.flat[idx]
            t.flat[idx] = orig + fd_step
            up = objective()
            t.flat[idx] = orig - fd_step
            down = objective()
            t.flat[idx] = orig
            fd = (up - down) / (2 * fd_step)
            an = analytic[name].flat[idx]
            denom = max(abs(an), abs(fd))
            if denom < 1e-12:
                continue
            max_rel = max(max_rel, abs(an - fd) / denom)
            checked += 1
    if checked < n_coords // 2:
        raise RuntimeError("too few nonzero coordinates checked")
    return max_rel


def _shapes(cfg: DLMConfig):
    from .model import _tensor_shapes

    return _tensor_shapes(cfg)
