"""Built-in oracle suites: every core algorithm checked against an
independent brute-force implementation, runnable from the CLI on a fresh
checkout.

Each check returns (ok, detail); `run_all` prints one line per check and
reports overall success.  The oracles here are deliberately naive
(path enumeration, exhaustive search, finite differences, recursive edit
scripts) and never call the code paths they validate.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .ctc import NEG_INF, ctc_forward_logprob, prefix_beam_search
from .decode import dlm_beam, dsr_exact_marginal, enumerate_strings
from .dlm import DLMConfig, forward_logprob, grad_check, init_model
from .emissions import EmissionMatrix
from .rng import Rng
from .wer import wer


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _random_emissions(rng: Rng, T: int, vocab: Vocabulary) -> EmissionMatrix:
    V = len(vocab.chars) + 1
    u = rng.uniform(T * V).reshape(T, V)
    logp = np.log(np.maximum(u, 1e-4))
    logp -= np.logaddexp.reduce(logp, axis=1, keepdims=True)
    return EmissionMatrix(logp.astype(np.float32))


def _brute_forward(E: EmissionMatrix, y: str, vocab: Vocabulary) -> float:
    """Enumerate every frame path, collapse it, and sum matching mass."""
    logp = E.logp.astype(np.float64)
    T, V = logp.shape
    total = NEG_INF
    for path in itertools.product(range(V), repeat=T):
        out = []
        prev = -1
        for s in path:
            if s != prev and s != vocab.blank_id:
                out.append(vocab.chars[s])
            prev = s
        if "".join(out) == y:
            total = np.logaddexp(total, sum(logp[t, s] for t, s in enumerate(path)))
    return total


def check_ctc_forward(seed: int = 0, n_instances: int = 100,
                      tol: float = 1e-9) -> CheckResult:
    """Forward recursion vs path enumeration, T <= 6, |vocab| <= 3."""
    t0 = time.time()
    rng = Rng(seed).derive("selftest-ctc")
    worst = 0.0
    done = 0
    while done < n_instances:
        n_chars = 2 + rng.integers(2)  # 2 or 3 symbols
        vocab = Vocabulary(chars=tuple("abc"[:n_chars]))
        T = 1 + rng.integers(6)
        E = _random_emissions(rng, T, vocab)
        strings = [""]
        for L in range(1, min(T, 4) + 1):
            strings += ["".join(c) for c in
                        itertools.product(vocab.chars, repeat=L)]
        pick = [strings[rng.integers(len(strings))] for _ in range(4)]
        for y in pick:
            got = ctc_forward_logprob(E, y, vocab)
            want = _brute_forward(E, y, vocab)
            if got == NEG_INF and want == NEG_INF:
                continue
            worst = max(worst, abs(got - want))
        done += 1
    ok = worst <= tol
    return CheckResult("ctc-forward-oracle", ok,
                       f"{n_instances} instances, worst |diff| {worst:.2e}",
                       time.time() - t0)


def check_exact_marginal(seed: int = 0, n_instances: int = 100,
                         slack: float = 1e-9) -> CheckResult:
    """Cascade enumeration: exact >= bound, equality under one-hot."""
    t0 = time.time()
    rng = Rng(seed).derive("selftest-marginal")
    vocab = Vocabulary(chars=("a", "b"))
    cfg = DLMConfig(d_model=8, n_heads=2, mlp_hidden=16, n_encoder_layers=1,
                    n_decoder_layers=1, max_seq_len=16, dropout_rate=0.0,
                    vocab_size=vocab.n_dlm)
    worst_gap = 0.0
    ok = True
    for i in range(n_instances):
        params = init_model(cfg, seed=seed + i)
        T = 1 + rng.integers(4)
        E = _random_emissions(rng, T, vocab)
        y = ["a", "b", "ab", "ba", "aa"][rng.integers(5)]
        exact, bound = dsr_exact_marginal(params, E, y, max_len=4, vocab=vocab)
        if exact < bound - slack:
            ok = False
            worst_gap = max(worst_gap, bound - exact)
    # one-hot acoustic mass must collapse the inequality to equality
    params = init_model(cfg, seed=seed)
    ids = vocab.encode("ab")
    logp = np.full((2, 3), NEG_INF, dtype=np.float32)
    logp[np.arange(2), ids] = 0.0
    exact, bound = dsr_exact_marginal(params, EmissionMatrix(logp), "ba", 4, vocab)
    _, want = forward_logprob(params, "ab", "ba", vocab)
    if abs(exact - want) > slack or abs(bound - want) > slack:
        ok = False
    detail = f"{n_instances} instances, Jensen holds" if ok else \
        f"violation, worst gap {worst_gap:.2e}"
    return CheckResult("cascade-marginal-oracle", ok, detail, time.time() - t0)


def check_gradients(seed: int = 0, tol: float = 1e-4) -> CheckResult:
    t0 = time.time()
    err = grad_check(seed=seed)
    return CheckResult("gradient-check", err <= tol,
                       f"max relative error {err:.2e} (tol {tol:.0e})",
                       time.time() - t0)


def check_beam_search(seed: int = 0, n_instances: int = 20) -> CheckResult:
    """Prefix beam (width 64) and denoiser beam vs exhaustive search."""
    t0 = time.time()
    rng = Rng(seed).derive("selftest-beam")
    vocab = Vocabulary(chars=("a", "b"))
    ok = True
    detail = []
    for i in range(n_instances):
        T = 1 + rng.integers(5)
        E = _random_emissions(rng, T, vocab)
        hyps = prefix_beam_search(E, 64, vocab=vocab)
        best, best_score = None, None
        for L in range(0, T + 1):
            for tup in itertools.product(vocab.chars, repeat=L):
                y = "".join(tup)
                s = ctc_forward_logprob(E, y, vocab)
                if s == NEG_INF:
                    continue
                if best_score is None or s > best_score + 1e-12 or \
                        (abs(s - best_score) <= 1e-12 and y < best):
                    best, best_score = y, s
        if hyps[0].text != best:
            ok = False
            detail.append(f"ctc-beam mismatch at instance {i}")
            break

    cfg = DLMConfig(d_model=8, n_heads=2, mlp_hidden=16, n_encoder_layers=1,
                    n_decoder_layers=1, max_seq_len=16, dropout_rate=0.0,
                    vocab_size=vocab.n_dlm)
    for i in range(8):
        params = init_model(cfg, seed=seed + 100 + i)
        beam = dlm_beam(params, "ab", n_best=64, nucleus_p=1.0,
                        max_decode_len=4, vocab=vocab)
        top = max(beam, key=lambda c: c.dlm_logprob)
        scored = []
        for s in enumerate_strings(vocab, 4):
            _, total = forward_logprob(params, "ab", s, vocab)
            scored.append((total, s))
        scored.sort(key=lambda p: (-p[0], p[1]))
        if top.text != scored[0][1]:
            ok = False
            detail.append(f"dlm-beam mismatch at model {i}")
            break
    return CheckResult("beam-search-oracles", ok,
                       "; ".join(detail) or f"{n_instances}+8 instances exact",
                       time.time() - t0)


def check_wer(seed: int = 0, n_pairs: int = 500) -> CheckResult:
    """Backtrace counts vs exhaustive edit-script search, <= 6 words."""
    t0 = time.time()
    rng = Rng(seed).derive("selftest-wer")
    words = ["a", "b", "c", "d", "e"]
    ok = True
    for _ in range(n_pairs):
        nr = 1 + rng.integers(6)
        nh = rng.integers(7)
        ref = " ".join(words[rng.integers(5)] for _ in range(nr))
        hyp = " ".join(words[rng.integers(5)] for _ in range(nh))
        rep = wer(ref, hyp)
        want = _canonical_script_counts(ref, hyp)
        if (rep.substitutions, rep.insertions, rep.deletions) != want:
            ok = False
            break
    return CheckResult("wer-oracle", ok, f"{n_pairs} random pairs, exact counts",
                       time.time() - t0)


def _canonical_script_counts(ref: str, hyp: str):
    """Recursive enumeration of all edit scripts; canonical = minimal
    cost, then the backtrace priority substitution > deletion > insertion
    applied from the end."""
    r, h = ref.split(), hyp.split()
    scripts = []

    def walk(i, j, ops, s, ins, dele):
        if i == 0 and j == 0:
            scripts.append((s + ins + dele, tuple(ops), (s, ins, dele)))
            return
        if i > 0 and j > 0:
            walk(i - 1, j - 1, ops + [0], s + (r[i - 1] != h[j - 1]), ins, dele)
        if i > 0:
            walk(i - 1, j, ops + [1], s, ins, dele + 1)
        if j > 0:
            walk(i, j - 1, ops + [2], s, ins + 1, dele)

    walk(len(r), len(h), [], 0, 0, 0)
    return min(scripts)[2]


def run_all(seed: int = 0, out=None) -> list[CheckResult]:
    checks = [
        check_ctc_forward(seed),
        check_exact_marginal(seed),
        check_gradients(seed),
        check_beam_search(seed),
        check_wer(seed),
    ]
    lines = []
    for c in checks:
        status = "PASS" if c.ok else "FAIL"
        lines.append(f"[{status}] {c.name}: {c.detail} ({c.seconds:.1f}s)")
    text = "\n".join(lines)
    print(text)
    if out is not None:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return checks
