"""Ablation and scaling harness: train one denoiser per swept row and
report asr-passthrough / dlm-greedy / dsr WERs on held-out speakers.

Row kinds mirror the headline ablations: `speakers` sweeps the number of
channel speakers, `mixing` the real-analog proportion, `noise` the
cumulative augmentation stack (base, +substitution, +masking,
+real-analog), and `datasize` the training-text volume.  Identical row
configurations are trained once (cache keyed by the full recipe).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict, replace

from .channel import ChannelConfig, make_eval_set, make_pairs
from .corpus import CorpusSplit, Vocabulary, DEFAULT_VOCAB
from .ctc import greedy_collapse
from .decode import DSRConfig, dlm_beam, dlm_greedy, rescore_beam, tune_lambda
from .ctc import ctc_forward_logprob
from .dlm import DLMConfig, TrainConfig, train
from .wer import corpus_wer, oracle_wer

SWEEPS = {
    "speakers": (1, 4, 16),
    "mixing": (0.0, 0.5, 1.0),
    "noise": ("base", "+s", "+s+mask", "+s+mask+real"),
    "datasize": (0.5, 1.0),
}


@dataclass
class ExperimentRow:
    name: str
    config_summary: dict
    wer_asr: float
    wer_dlm_greedy: float
    wer_dsr: float | None = None
    lam: float | None = None
    wer_oracle: float | None = None


@dataclass
class ExperimentReport:
    name: str
    seed: int
    rows: list[ExperimentRow]
    wall_clock_s: float = 0.0
    partial: bool = False  # budget ran out before all rows finished

    def to_json(self) -> dict:
        return {"name": self.name, "seed": self.seed,
                "wall_clock_s": self.wall_clock_s, "partial": self.partial,
                "rows": [asdict(r) for r in self.rows]}

    def table(self) -> str:
        header = f"{'row':<16} {'asr':>8} {'dlm-greedy':>11} {'dsr':>8} {'lambda':>7}"
        title = f"experiment: {self.name} (seed {self.seed})"
        if self.partial:
            title += "  [PARTIAL: budget exceeded]"
        lines = [title, header, "-" * len(header)]
        for r in self.rows:
            dsr = f"{100 * r.wer_dsr:8.2f}" if r.wer_dsr is not None else f"{'-':>8}"
            lam = f"{r.lam:7.2f}" if r.lam is not None else f"{'-':>7}"
            lines.append(
                f"{r.name:<16} {100 * r.wer_asr:8.2f} "
                f"{100 * r.wer_dlm_greedy:11.2f} {dsr} {lam}"
            )
        return "\n".join(lines)


class ModelCache:
    """Train-once cache keyed by the complete training recipe."""

    def __init__(self):
        self._models = {}

    @staticmethod
    def key(channel: ChannelConfig, dlm: DLMConfig, tc: TrainConfig,
            n_pairs: int, n_train_sentences: int):
        return (tuple(sorted(asdict(channel).items())),
                tuple(sorted(dlm.to_dict().items())),
                tuple(sorted(asdict(tc).items())),
                n_pairs, n_train_sentences)

    def get_or_train(self, split, channel, dlm, tc, n_pairs,
                     val_pairs=None, vocab=DEFAULT_VOCAB, quiet=True):
        k = self.key(channel, dlm, tc, n_pairs, len(split.train))
        if k not in self._models:
            stream = make_pairs(split, channel, n_pairs, vocab)
            params, _ = train(stream, dlm, tc, val_pairs=val_pairs,
                              vocab=vocab, quiet=quiet)
            self._models[k] = params
        return self._models[k]


def greedy_correct(params, eval_set, max_decode_len, vocab=DEFAULT_VOCAB):
    """(ref, corrected) pairs for an evaluation set of emissions."""
    out = []
    for ref, E in eval_set:
        hyp = greedy_collapse(E, vocab)
        out.append((ref, dlm_greedy(params, hyp, max_decode_len, vocab)[0]))
    return out


def dsr_evaluate(params, eval_set, cfg: DSRConfig, lam: float,
                 vocab=DEFAULT_VOCAB):
    """Corpus WER of blended rescoring plus the beam's oracle WER."""
    hyps, refs, beams = [], [], []
    for ref, E in eval_set:
        collapsed = greedy_collapse(E, vocab)
        beam = dlm_beam(params, collapsed, cfg.n_best, cfg.nucleus_p,
                        cfg.max_decode_len, vocab)
        scored = [(c, ctc_forward_logprob(E, c.text, vocab)) for c in beam]
        text, _ = rescore_beam(scored, lam)
        hyps.append((ref, text))
        refs.append(ref)
        beams.append([c.text for c in beam])
    top1 = corpus_wer(hyps)
    oracle = oracle_wer(refs, beams)
    assert oracle.errors <= top1.errors, "oracle WER exceeded top-1 WER"
    return top1, oracle


def _noise_row_config(base: ChannelConfig, row: str) -> ChannelConfig:
    if row == "base":
        return replace(base, s=0.0, n_masks=0, real_fraction=0.0)
    if row == "+s":
        return replace(base, n_masks=0, real_fraction=0.0)
    if row == "+s+mask":
        return replace(base, real_fraction=0.0)
    if row == "+s+mask+real":
        return replace(base)
    raise ValueError(f"unknown noise row {row!r}")


def run_experiment(
    kind: str,
    split: CorpusSplit,
    channel: ChannelConfig,
    dlm_config: DLMConfig,
    train_config: TrainConfig,
    seed: int,
    n_pairs: int = 150_000,
    rows=None,
    n_tune: int = 100,
    n_test: int = 300,
    include_dsr: bool = True,
    dsr_config: DSRConfig | None = None,
    cache: ModelCache | None = None,
    vocab: Vocabulary = DEFAULT_VOCAB,
    quiet: bool = True,
    budget_s: float | None = None,
) -> ExperimentReport:
    if kind not in SWEEPS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    rows = tuple(rows) if rows is not None else SWEEPS[kind]
    cache = cache or ModelCache()
    dsr_config = dsr_config or DSRConfig(n_best=16, max_decode_len=dlm_config.max_seq_len // 4)
    t0 = time.time()

    tune_set = make_eval_set(split.validation[:n_tune], channel, vocab=vocab)
    test_set = make_eval_set(split.test[:n_test], channel, vocab=vocab)
    raw = corpus_wer([(ref, greedy_collapse(E, vocab)) for ref, E in test_set])

    report_rows = []
    partial = False
    for row in rows:
        if budget_s is not None and time.time() - t0 > budget_s:
            partial = True
            break
        row_channel = channel
        row_split = split
        summary: dict = {"kind": kind, "row": row}
        if kind == "speakers":
            row_channel = replace(channel, n_speakers=int(row))
        elif kind == "mixing":
            row_channel = replace(channel, real_fraction=float(row))
        elif kind == "noise":
            row_channel = _noise_row_config(channel, row)
        elif kind == "datasize":
            keep = max(1, int(len(split.train) * float(row)))
            row_split = CorpusSplit(split.train[:keep], split.validation,
                                    split.test, split.seed)
            summary["train_sentences"] = keep
        summary["channel"] = asdict(row_channel)

        params = cache.get_or_train(row_split, row_channel, dlm_config,
                                    train_config, n_pairs, vocab=vocab,
                                    quiet=quiet)
        greedy_pairs = greedy_correct(params, test_set,
                                      dsr_config.max_decode_len, vocab)
        w_greedy = corpus_wer(greedy_pairs).wer

        w_dsr = lam = w_oracle = None
        if include_dsr:
            lam, _ = tune_lambda(params, tune_set, cfg=dsr_config, vocab=vocab)
            top1, oracle = dsr_evaluate(params, test_set,
                                        replace(dsr_config, lam=lam), lam, vocab)
            w_dsr, w_oracle = top1.wer, oracle.wer
        report_rows.append(ExperimentRow(str(row), summary, raw.wer, w_greedy,
                                         w_dsr, lam, w_oracle))
    return ExperimentReport(kind, seed, report_rows,
                            round(time.time() - t0, 1), partial)


def write_report(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2)
        f.write("\n")
