import json
import os
import subprocess
import sys

import pytest

from dsr.cli import main
from dsr.config import ConfigError, apply_override, load_config

QUICK = os.path.join(os.path.dirname(__file__), "..", "configs", "quick.json")

SMOKE = [
    "--set", "corpus.synthetic_sentences=400",
    "--set", "dlm.d_model=16", "--set", "dlm.n_heads=2",
    "--set", "dlm.mlp_hidden=32", "--set", "dlm.n_encoder_layers=1",
    "--set", "train.batch_tokens=400", "--set", "train.max_steps=30",
    "--set", "train.warmup_steps=5", "--set", "train.eval_every=30",
    "--set", "train.n_pairs=2000", "--set", "eval.n_validation=5",
    "--set", "eval.n_tune=6", "--set", "eval.n_test=8",
    "--set", "decode.n_best=4", "--set", "decode.beam_width=8",
    "--set", "decode.max_decode_len=80",
]


class TestConfig:
    def test_defaults_load(self):
        cfg = load_config()
        assert cfg["channel"]["s"] == 0.1
        assert cfg["decode"]["nucleus_p"] == 0.9

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"channel": {"nope": 1}}))
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_type_checked(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"channel": {"s": "high"}}))
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_override(self):
        cfg = load_config(overrides=["channel.s=0.25", "dlm.d_model=64"])
        assert cfg["channel"]["s"] == 0.25
        assert cfg["dlm"]["d_model"] == 64

    def test_override_unknown_key(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["channel.bogus=1"])

    def test_override_shape(self):
        with pytest.raises(ConfigError):
            apply_override(load_config(), "justakey")


class TestCliPipeline:
    def test_selftest_exit_zero(self, tmp_path):
        out = tmp_path / "report.txt"
        assert main(["selftest", "--seed", "0", "--out", str(out)]) == 0
        assert "PASS" in out.read_text()

    def test_grad_check(self):
        assert main(["grad-check", "--seed", "0"]) == 0

    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["no-such-command"])
        assert e.value.code == 2

    def test_bad_config_exit_code(self, tmp_path):
        assert main(["gen-corpus", "--out", str(tmp_path),
                     "--set", "channel.bogus=1"]) == 3

    def test_missing_input_exit_code(self, tmp_path):
        code = main(["decode", "--mode", "asr",
                     "--emissions", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "o")])
        assert code == 4

    def test_decode_dsr_without_checkpoint(self, tmp_path):
        emdir = tmp_path / "em"
        assert main(["gen-emissions", "--out", str(emdir), *SMOKE]) == 0
        code = main(["decode", "--mode", "dsr", "--emissions", str(emdir),
                     "--out", str(tmp_path / "o"), *SMOKE])
        assert code == 4

    def test_end_to_end_smoke(self, tmp_path):
        """gen-corpus -> pairs -> emissions -> train -> ngram -> decode
        all four modes -> tune-lambda -> score, at toy sizes."""
        run = tmp_path / "run"
        assert main(["gen-corpus", "--out", str(run), *SMOKE]) == 0
        assert (run / "corpus.txt").exists()
        assert (run / "config.json").exists()

        assert main(["gen-pairs", "--out", str(run), *SMOKE,
                     "--set", "train.n_pairs=200"]) == 0
        pairs = (run / "pairs.jsonl").read_text().splitlines()
        assert len(pairs) == 200
        row = json.loads(pairs[0])
        assert {"id", "target", "hypothesis", "source", "speaker"} <= set(row)

        assert main(["gen-emissions", "--out", str(run), *SMOKE]) == 0
        assert (run / "refs.jsonl").exists()

        assert main(["train-dlm", "--out", str(run), *SMOKE]) == 0
        ckpt = run / "checkpoints" / "final.dlmc"
        assert ckpt.exists()

        assert main(["train-ngram", "--out", str(run), *SMOKE]) == 0
        assert (run / "ngram.txt").exists()

        for mode in ("asr", "dlm-greedy"):
            assert main(["decode", "--mode", mode, "--emissions", str(run),
                         "--checkpoint", str(ckpt), "--out", str(run),
                         *SMOKE]) == 0
        assert main(["decode", "--mode", "dsr", "--emissions", str(run),
                     "--checkpoint", str(ckpt), "--lambda", "1.0",
                     "--keep-beam", "--out", str(run), *SMOKE]) == 0
        assert main(["decode", "--mode", "lm-rescore", "--emissions", str(run),
                     "--ngram", str(run / "ngram.txt"), "--out", str(run),
                     *SMOKE]) == 0

        assert main(["tune-lambda", "--emissions", str(run),
                     "--checkpoint", str(ckpt), "--out", str(run), *SMOKE,
                     "--set", "decode.lambda_grid=[0.0,1.0]"]) == 0
        lam = json.loads((run / "lambda.json").read_text())
        assert lam["lambda"] in (0.0, 1.0)

        for mode in ("asr", "dlm_greedy", "dsr", "lm_rescore"):
            code = main(["score", "--refs", str(run / "refs.jsonl"),
                         "--hyps", str(run / "decodes" / f"{mode}.jsonl"),
                         "--out", str(run), *SMOKE])
            assert code == 0
            rep = json.loads(
                (run / "reports" / f"score_{mode}.json").read_text())
            assert 0 <= rep["wer"]
        dsr_rep = json.loads((run / "reports" / "score_dsr.json").read_text())
        assert "oracle_wer" in dsr_rep
        assert dsr_rep["oracle_wer"] <= dsr_rep["wer"] + 1e-12

    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "dsr.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "exit codes" in proc.stdout
