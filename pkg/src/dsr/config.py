"""Run configuration: a JSON document with one section per pipeline
stage, validated against the defaults tree (unknown keys rejected, types
checked), with --set dotted-path overrides.  Every command echoes its
fully resolved config into the output directory.
"""

from __future__ import annotations

import copy
import json

DEFAULTS = {
    "corpus": {
        "path": "",  # one sentence per line; empty -> use gen-corpus output
        "synthetic_sentences": 120_000,
        "seed": 11,
        "fractions": [0.98, 0.01, 0.01],
    },
    "channel": {
        "s": 0.1,
        "n_masks": 2,
        "mask_max_width": 30,
        "n_speakers": 16,
        "real_fraction": 0.1,
        "seed": 11,
    },
    "dlm": {
        "d_model": 128,
        "n_heads": 4,
        "mlp_hidden": 512,
        "n_encoder_layers": 4,
        "n_decoder_layers": 1,
        "max_seq_len": 512,
        "dropout_rate": 0.1,
        "seed": 0,
        "tie_embeddings": False,
    },
    "train": {
        "batch_tokens": 4000,
        "peak_lr": 0.002,
        "warmup_steps": 150,
        "constant_steps": 100_000,
        "decay_rate": 0.5,
        "decay_every": 50_000,
        "weight_decay": 0.01,
        "grad_clip": 0.1,
        "max_steps": 1200,
        "eval_every": 300,
        "seed": 0,
        "log_every": 50,
        "n_pairs": 600_000,
    },
    "decode": {
        "n_best": 64,
        "nucleus_p": 0.9,
        "lambda": 1.0,
        "max_decode_len": 128,
        "lambda_grid": [0.25 * i for i in range(13)],
        "beam_width": 64,
        "fusion_lm_weight": 0.5,
        "word_score": 0.0,
        "lm_weight": 0.5,
        "lm_weight_grid": [0.25 * i for i in range(13)],
        "ngram_order": 3,
        "ngram_discount": 0.75,
    },
    "eval": {
        "n_validation": 100,
        "n_tune": 200,
        "n_test": 400,
        "experiment_steps": 700,
        "experiment_pairs": 300_000,
        "experiment_n_tune": 100,
        "experiment_n_test": 300,
        "experiment_dsr": True,
    },
}


class ConfigError(ValueError):
    pass


def _check_section(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        base = defaults[key]
        if isinstance(base, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a section")
            out[key] = _check_section(base, value, where)
        else:
            out[key] = _coerce(base, value, where)
    return out


def _coerce(base, value, where: str):
    if isinstance(base, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(base, int) and not isinstance(base, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(base, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(base, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(base, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return value
    raise ConfigError(f"{where}: unsupported config type")


def load_config(path: str | None = None, overrides: list[str] | None = None) -> dict:
    """Resolve defaults + optional JSON file + --set overrides."""
    given = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            given = json.load(f)
        if not isinstance(given, dict):
            raise ConfigError("config root must be a JSON object")
    cfg = _check_section(DEFAULTS, given, "")
    for item in overrides or []:
        cfg = apply_override(cfg, item)
    return cfg


def apply_override(cfg: dict, item: str) -> dict:
    """Apply one 'section.key=value' override (value parsed as JSON,
    falling back to a bare string)."""
    if "=" not in item:
        raise ConfigError(f"override must look like section.key=value: {item!r}")
    dotted, raw = item.split("=", 1)
    keys = dotted.split(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = {}
    leaf = node
    for k in keys[:-1]:
        leaf[k] = {}
        leaf = leaf[k]
    leaf[keys[-1]] = value
    merged = _merge(cfg, node)
    return _check_section(DEFAULTS, merged, "")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def echo_config(cfg: dict, out_dir: str) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")
