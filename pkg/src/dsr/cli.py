"""Command-line surface: one binary, one subcommand per pipeline stage.

Exit codes (also in --help):
  0 success
  2 usage error (bad flags / unknown subcommand)
  3 invalid configuration
  4 missing input file or directory
  5 runtime failure (e.g. training divergence)
  6 selftest or grad-check failure

Heavy imports happen inside handlers so --threads can pin the BLAS
thread pool before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_RUNTIME = 5
EXIT_CHECK = 6

EPILOG = """\
exit codes: 0 ok, 2 usage, 3 bad config, 4 missing input, 5 runtime
failure, 6 failed selftest/grad-check.

artifacts land under --out: config.json (resolved echo), corpus.txt,
pairs.jsonl, emissions/*.dlme + refs.jsonl, checkpoints/*.dlmc,
metrics.jsonl, ngram.txt, decodes/*.jsonl, reports/*.json.
"""


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dsr",
        description="simulated ASR channel + character denoiser + rescoring decoders",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--threads", type=int, default=0,
                   help="cap BLAS/worker threads (0 = all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", default=None, help="JSON config path")
        sp.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override config, e.g. --set channel.s=0.1")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("gen-corpus", help="write the synthetic desk corpus"))
    common(sub.add_parser("gen-pairs", help="channel -> pairs.jsonl"))
    sp = sub.add_parser("gen-emissions", help="emission matrices for a split")
    common(sp)
    sp.add_argument("--split", choices=("validation", "test"), default="test")
    sp.add_argument("--count", type=int, default=0, help="0 = eval section default")

    sp = sub.add_parser("train-dlm", help="train the denoiser")
    common(sp)
    sp.add_argument("--pairs", default=None, help="pairs.jsonl (default: stream from channel)")

    common(sub.add_parser("train-ngram", help="train the word n-gram LM"))

    sp = sub.add_parser("decode", help="decode an emissions directory")
    common(sp)
    sp.add_argument("--mode", required=True,
                    choices=("asr", "dlm-greedy", "dsr", "lm-rescore"))
    sp.add_argument("--emissions", required=True, help="gen-emissions output dir")
    sp.add_argument("--checkpoint", default=None, help=".dlmc for dlm modes")
    sp.add_argument("--ngram", default=None, help="ngram.txt for lm-rescore")
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="blend weight (default: decode.lambda)")
    sp.add_argument("--lm-weight", type=float, default=None)
    sp.add_argument("--keep-beam", action="store_true",
                    help="write the scored beam into the JSONL rows")

    sp = sub.add_parser("tune-lambda", help="grid-search the blend weight")
    common(sp)
    sp.add_argument("--emissions", required=True)
    sp.add_argument("--checkpoint", required=True)

    sp = sub.add_parser("score", help="WER report from refs + decodes")
    common(sp)
    sp.add_argument("--refs", required=True, help="refs.jsonl")
    sp.add_argument("--hyps", required=True, help="decodes jsonl")

    sp = sub.add_parser("experiment", help="train/evaluate one sweep")
    common(sp)
    sp.add_argument("--kind", required=True,
                    choices=("speakers", "mixing", "noise", "datasize"))
    sp.add_argument("--rows", default=None,
                    help="comma-separated row values (default: full sweep)")

    sp = sub.add_parser("grad-check", help="finite-difference gradient check")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("selftest", help="run all brute-force oracle suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None, help="optional report file")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return _dispatch(args)
    except BrokenPipeError:
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    from .config import ConfigError

    try:
        handler = HANDLERS[args.command]
    except KeyError:  # unreachable via argparse, kept for safety
        print(f"error: unknown subcommand {args.command}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return handler(args)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: missing input: {e}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as e:
        from .dlm import DivergenceError

        if isinstance(e, DivergenceError):
            print(f"error: divergence: {e}", file=sys.stderr)
        else:
            print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def _resolve(args):
    from .config import echo_config, load_config

    cfg = load_config(args.config, args.set)
    if getattr(args, "out", None):
        echo_config(cfg, args.out)
    return cfg


def _load_split(cfg):
    from .corpus import load_corpus, split_corpus
    from .deskdata import make_desk_corpus

    c = cfg["corpus"]
    if c["path"]:
        transcripts, rejected = load_corpus(c["path"])
        if rejected:
            print(f"rejected {rejected} unmappable lines", file=sys.stderr)
    else:
        transcripts = make_desk_corpus(c["synthetic_sentences"], c["seed"])
    return split_corpus(transcripts, tuple(c["fractions"]), c["seed"])


def _channel_config(cfg):
    from .channel import ChannelConfig

    ch = cfg["channel"]
    out = ChannelConfig(s=ch["s"], n_masks=ch["n_masks"],
                        mask_max_width=ch["mask_max_width"],
                        n_speakers=ch["n_speakers"],
                        real_fraction=ch["real_fraction"], seed=ch["seed"])
    out.validate()
    return out


def _dlm_config(cfg):
    from .dlm import DLMConfig

    d = cfg["dlm"]
    out = DLMConfig(d_model=d["d_model"], n_heads=d["n_heads"],
                    mlp_hidden=d["mlp_hidden"],
                    n_encoder_layers=d["n_encoder_layers"],
                    n_decoder_layers=d["n_decoder_layers"],
                    max_seq_len=d["max_seq_len"],
                    dropout_rate=d["dropout_rate"], seed=d["seed"],
                    tie_embeddings=d["tie_embeddings"])
    out.validate()
    return out


def _train_config(cfg):
    from .dlm import TrainConfig

    t = cfg["train"]
    out = TrainConfig(batch_tokens=t["batch_tokens"], peak_lr=t["peak_lr"],
                      warmup_steps=t["warmup_steps"],
                      constant_steps=t["constant_steps"],
                      decay_rate=t["decay_rate"], decay_every=t["decay_every"],
                      weight_decay=t["weight_decay"], grad_clip=t["grad_clip"],
                      max_steps=t["max_steps"], eval_every=t["eval_every"],
                      seed=t["seed"], log_every=t["log_every"])
    out.validate()
    return out


def _dsr_config(cfg, lam=None):
    from .decode import DSRConfig

    d = cfg["decode"]
    out = DSRConfig(n_best=d["n_best"], nucleus_p=d["nucleus_p"],
                    lam=d["lambda"] if lam is None else lam,
                    max_decode_len=d["max_decode_len"])
    out.validate()
    return out


def cmd_gen_corpus(args) -> int:
    from .deskdata import make_desk_corpus, write_corpus

    cfg = _resolve(args)
    c = cfg["corpus"]
    transcripts = make_desk_corpus(c["synthetic_sentences"], c["seed"])
    path = os.path.join(args.out, "corpus.txt")
    write_corpus(transcripts, path)
    print(f"wrote {len(transcripts)} sentences to {path}")
    return EXIT_OK


def cmd_gen_pairs(args) -> int:
    from .channel import make_pairs, write_pairs_jsonl

    cfg = _resolve(args)
    split = _load_split(cfg)
    channel = _channel_config(cfg)
    count = cfg["train"]["n_pairs"]
    path = os.path.join(args.out, "pairs.jsonl")
    n = write_pairs_jsonl(path, make_pairs(split, channel, count))
    print(f"wrote {n} pairs to {path}")
    return EXIT_OK


def cmd_gen_emissions(args) -> int:
    from .channel import make_eval_set
    from .emissions import write_dlme

    cfg = _resolve(args)
    split = _load_split(cfg)
    channel = _channel_config(cfg)
    part = split.validation if args.split == "validation" else split.test
    count = args.count or (cfg["eval"]["n_tune"] if args.split == "validation"
                           else cfg["eval"]["n_test"])
    transcripts = part[:count]
    if not transcripts:
        raise FileNotFoundError(f"no sentences available in split {args.split}")
    emissions_dir = os.path.join(args.out, "emissions")
    os.makedirs(emissions_dir, exist_ok=True)
    eval_set = make_eval_set(transcripts, channel)
    with open(os.path.join(args.out, "refs.jsonl"), "w", encoding="utf-8") as f:
        for t, (ref, E) in zip(transcripts, eval_set):
            write_dlme(E, os.path.join(emissions_dir, f"{t.id}.dlme"))
            f.write(json.dumps({"id": t.id, "text": ref}) + "\n")
    print(f"wrote {len(eval_set)} emission files under {emissions_dir}")
    return EXIT_OK


def cmd_train_dlm(args) -> int:
    from .channel import make_eval_set, make_pairs, read_pairs_jsonl
    from .ctc import greedy_collapse
    from .dlm import train

    cfg = _resolve(args)
    split = _load_split(cfg)
    channel = _channel_config(cfg)
    dlm_cfg = _dlm_config(cfg)
    train_cfg = _train_config(cfg)
    if args.pairs:
        if not os.path.exists(args.pairs):
            raise FileNotFoundError(args.pairs)
        stream = iter(read_pairs_jsonl(args.pairs))
    else:
        stream = make_pairs(split, channel, cfg["train"]["n_pairs"])
    val_set = make_eval_set(split.validation[: cfg["eval"]["n_validation"]], channel)
    val_pairs = [(greedy_collapse(E), ref) for ref, E in val_set]
    train(stream, dlm_cfg, train_cfg, out_dir=args.out, val_pairs=val_pairs)
    print(f"training finished; checkpoints under {os.path.join(args.out, 'checkpoints')}")
    return EXIT_OK


def cmd_train_ngram(args) -> int:
    from .ngram import perplexity, save_ngram, train_ngram

    cfg = _resolve(args)
    split = _load_split(cfg)
    lm = train_ngram(split.train, cfg["decode"]["ngram_order"],
                     cfg["decode"]["ngram_discount"])
    path = os.path.join(args.out, "ngram.txt")
    save_ngram(lm, path)
    held = perplexity(lm, split.validation) if split.validation else float("nan")
    print(f"wrote {path}; validation perplexity {held:.2f}")
    return EXIT_OK


def _read_emissions_dir(path):
    from .emissions import read_dlme

    refs_path = os.path.join(path, "refs.jsonl")
    if not os.path.exists(refs_path):
        raise FileNotFoundError(refs_path)
    rows = []
    with open(refs_path, "r", encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            dlme = os.path.join(path, "emissions", f"{d['id']}.dlme")
            if not os.path.exists(dlme):
                raise FileNotFoundError(dlme)
            rows.append((d["id"], d["text"], read_dlme(dlme, d["id"])))
    rows.sort(key=lambda r: r[0])
    return rows


def _load_checkpoint(path):
    from .dlm import load_checkpoint

    if not path:
        raise FileNotFoundError("this mode needs --checkpoint")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    params, _, _ = load_checkpoint(path)
    return params


def cmd_decode(args) -> int:
    from .ctc import (ctc_forward_logprob, greedy_collapse,
                      prefix_beam_search, score_to_json)
    from .decode import dlm_beam, dlm_greedy, lm_rescore, rescore_beam

    cfg = _resolve(args)
    utts = _read_emissions_dir(args.emissions)
    mode = args.mode.replace("-", "_")
    rows = []

    if mode in ("dlm_greedy", "dsr"):
        params = _load_checkpoint(args.checkpoint)
    if mode == "lm_rescore":
        from .ngram import load_ngram

        if not args.ngram:
            raise FileNotFoundError("lm-rescore needs --ngram")
        if not os.path.exists(args.ngram):
            raise FileNotFoundError(args.ngram)
        lm = load_ngram(args.ngram)
        lm_weight = cfg["decode"]["lm_weight"] if args.lm_weight is None else args.lm_weight

    dsr_cfg = _dsr_config(cfg, args.lam)
    for utt_id, _ref, E in utts:
        collapsed = greedy_collapse(E)
        if mode == "asr":
            rows.append({"id": utt_id, "mode": mode, "text": collapsed,
                         "scores": {"asr_logprob": score_to_json(
                             ctc_forward_logprob(E, collapsed))}})
        elif mode == "dlm_greedy":
            text, truncated = dlm_greedy(params, collapsed,
                                         dsr_cfg.max_decode_len)
            rows.append({"id": utt_id, "mode": mode, "text": text,
                         "scores": {"truncated": truncated}})
        elif mode == "dsr":
            beam = dlm_beam(params, collapsed, dsr_cfg.n_best,
                            dsr_cfg.nucleus_p, dsr_cfg.max_decode_len)
            scored = [(c, ctc_forward_logprob(E, c.text)) for c in beam]
            text, diag = rescore_beam(scored, dsr_cfg.lam)
            rows.append({"id": utt_id, "mode": mode, "text": text,
                         "scores": {"lambda": dsr_cfg.lam}, "beam": diag})
        else:  # lm_rescore
            nbest = prefix_beam_search(E, cfg["decode"]["beam_width"], lm,
                                       cfg["decode"]["fusion_lm_weight"],
                                       cfg["decode"]["word_score"])
            text = lm_rescore(nbest, lm, lm_weight)
            rows.append({"id": utt_id, "mode": mode, "text": text,
                         "scores": {"lm_weight": lm_weight},
                         "beam": [{"text": h.text,
                                   "asr_logprob": score_to_json(h.asr_logprob),
                                   "lm_logprob": score_to_json(h.lm_logprob)}
                                  for h in nbest],
                         "_nbest": nbest})
    decodes_dir = os.path.join(args.out, "decodes")
    os.makedirs(decodes_dir, exist_ok=True)
    if mode == "lm_rescore":
        from .ctc import write_nbest_jsonl

        nbest_path = os.path.join(decodes_dir, "lm_rescore_nbest.jsonl")
        for i, r in enumerate(rows):
            write_nbest_jsonl(nbest_path, r["id"], r.pop("_nbest"), append=i > 0)
    out_path = os.path.join(decodes_dir, f"{mode}.jsonl")
    with open(out_path, "w", encoding="utf-8") as f:
        for r in rows:
            if not args.keep_beam:
                r = {k: v for k, v in r.items() if k != "beam"}
            f.write(json.dumps(r) + "\n")
    print(f"wrote {len(rows)} decodes to {out_path}")
    return EXIT_OK


def cmd_tune_lambda(args) -> int:
    from .decode import tune_lambda

    cfg = _resolve(args)
    utts = _read_emissions_dir(args.emissions)
    params = _load_checkpoint(args.checkpoint)
    validation = [(ref, E) for _id, ref, E in utts]
    lam, rows = tune_lambda(params, validation,
                            grid=tuple(cfg["decode"]["lambda_grid"]),
                            cfg=_dsr_config(cfg))
    path = os.path.join(args.out, "lambda.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"lambda": lam, "grid": rows}, f, indent=2)
        f.write("\n")
    print(f"tuned lambda = {lam} -> {path}")
    return EXIT_OK


def cmd_score(args) -> int:
    from .wer import corpus_wer, oracle_wer, write_wer_diffs

    cfg = _resolve(args)
    refs = {}
    with open(args.refs, "r", encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            refs[d["id"]] = d["text"]
    hyps, beams, diff_rows = [], [], []
    with open(args.hyps, "r", encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            if d["id"] not in refs:
                raise FileNotFoundError(f"utterance {d['id']} missing from refs")
            hyps.append((refs[d["id"]], d["text"]))
            diff_rows.append((d["id"], refs[d["id"]], d["text"]))
            if "beam" in d:
                beams.append([c["text"] for c in d["beam"]])
    report = corpus_wer(hyps)
    out = {
        "wer": report.wer,
        "substitutions": report.substitutions,
        "insertions": report.insertions,
        "deletions": report.deletions,
        "ref_words": report.ref_words,
    }
    if len(beams) == len(hyps) and beams:
        orc = oracle_wer([r for r, _ in hyps], beams)
        assert orc.errors <= report.errors
        out["oracle_wer"] = orc.wer
    reports_dir = os.path.join(args.out, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    base = os.path.splitext(os.path.basename(args.hyps))[0]
    with open(os.path.join(reports_dir, f"score_{base}.json"), "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    write_wer_diffs(os.path.join(reports_dir, f"diffs_{base}.jsonl"), diff_rows)
    for k, v in out.items():
        print(f"{k:>14}: {v:.4f}" if isinstance(v, float) else f"{k:>14}: {v}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .decode import DSRConfig
    from .experiments import run_experiment, write_report

    cfg = _resolve(args)
    split = _load_split(cfg)
    channel = _channel_config(cfg)
    dlm_cfg = _dlm_config(cfg)
    train_cfg = _train_config(cfg)
    train_cfg.max_steps = cfg["eval"]["experiment_steps"]
    rows = None
    if args.rows:
        raw = args.rows.split(",")
        rows = raw if args.kind == "noise" else [json.loads(r) for r in raw]
    report = run_experiment(
        args.kind, split, channel, dlm_cfg, train_cfg,
        seed=cfg["channel"]["seed"],
        n_pairs=cfg["eval"]["experiment_pairs"], rows=rows,
        n_tune=cfg["eval"]["experiment_n_tune"],
        n_test=cfg["eval"]["experiment_n_test"],
        include_dsr=cfg["eval"]["experiment_dsr"],
        dsr_config=DSRConfig(n_best=cfg["decode"]["n_best"],
                             nucleus_p=cfg["decode"]["nucleus_p"],
                             max_decode_len=cfg["decode"]["max_decode_len"]),
        quiet=False,
    )
    reports_dir = os.path.join(args.out, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    path = os.path.join(reports_dir, f"experiment_{args.kind}.json")
    write_report(report, path)
    print(report.table())
    print(f"report -> {path}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .dlm import grad_check

    err = grad_check(seed=args.seed)
    ok = err <= 1e-4
    print(f"[{'PASS' if ok else 'FAIL'}] gradient-check: max relative error {err:.2e}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    checks = run_all(seed=args.seed, out=args.out)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_CHECK


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "gen-pairs": cmd_gen_pairs,
    "gen-emissions": cmd_gen_emissions,
    "train-dlm": cmd_train_dlm,
    "train-ngram": cmd_train_ngram,
    "decode": cmd_decode,
    "tune-lambda": cmd_tune_lambda,
    "score": cmd_score,
    "experiment": cmd_experiment,
    "grad-check": cmd_grad_check,
    "selftest": cmd_selftest,
}

if __name__ == "__main__":
    sys.exit(main())
