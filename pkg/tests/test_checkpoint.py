import numpy as np
import pytest

from dsr.dlm import (
    CheckpointError,
    DLMConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
)

CFG = DLMConfig(d_model=16, n_heads=2, mlp_hidden=24, n_encoder_layers=1,
                n_decoder_layers=1, max_seq_len=32)


def test_roundtrip_bit_exact(tmp_path):
    params = init_model(CFG, seed=9)
    path = tmp_path / "m.dlmc"
    save_checkpoint(params, 123, path)
    loaded, cfg, step = load_checkpoint(path)
    assert step == 123 and cfg == CFG
    assert list(loaded.tensors) == list(params.tensors)
    for name in params.tensors:
        np.testing.assert_array_equal(loaded.tensors[name], params.tensors[name])
        assert loaded.tensors[name].dtype == np.float32


def test_double_roundtrip_identical_bytes(tmp_path):
    params = init_model(CFG, seed=9)
    p1, p2 = tmp_path / "a.dlmc", tmp_path / "b.dlmc"
    save_checkpoint(params, 1, p1)
    loaded, _, _ = load_checkpoint(p1)
    save_checkpoint(loaded, 1, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_wrong_magic(tmp_path):
    path = tmp_path / "x.dlmc"
    path.write_bytes(b"XXXX" + b"\0" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated(tmp_path):
    params = init_model(CFG, seed=2)
    path = tmp_path / "t.dlmc"
    save_checkpoint(params, 7, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_trailing_garbage(tmp_path):
    params = init_model(CFG, seed=2)
    path = tmp_path / "g.dlmc"
    save_checkpoint(params, 7, path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_shape_mismatch(tmp_path):
    """Config block edited to imply different shapes must be rejected."""
    params = init_model(CFG, seed=3)
    path = tmp_path / "s.dlmc"
    save_checkpoint(params, 7, path)
    data = bytearray(path.read_bytes())
    # bump mlp_hidden in the JSON config block
    idx = data.find(b'"mlp_hidden": 24')
    data[idx : idx + len(b'"mlp_hidden": 24')] = b'"mlp_hidden": 25'
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
