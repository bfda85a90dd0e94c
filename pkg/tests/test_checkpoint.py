"""Parameter checkpoint round trips and fault handling."""

import numpy as np
import pytest

from mvnet import FormatError, Rng
from mvnet.checkpoint import load_checkpoint, save_checkpoint


def test_round_trip_bit_exact(tmp_path):
    rng = Rng(11)
    params = {
        "head.w": rng.normal((4, 3)).astype(np.float32),
        "head.b": np.zeros(3, dtype=np.float32),
        "stage3.layer0.norm1.gain": rng.normal((16,)).astype(np.float32),
        "scalar": np.float32(2.5).reshape(()),
    }
    path = tmp_path / "ck.mvnw"
    save_checkpoint(params, str(path))
    back = load_checkpoint(str(path))
    assert list(back) == list(params)
    for name in params:
        assert back[name].dtype == np.float32
        assert np.asarray(params[name]).shape == back[name].shape
        assert np.asarray(params[name]).tobytes() == back[name].tobytes()


def test_float64_narrowed_then_stable(tmp_path):
    params = {"w": Rng(3).normal((5, 5))}
    p1, p2 = tmp_path / "a.mvnw", tmp_path / "b.mvnw"
    save_checkpoint(params, str(p1))
    save_checkpoint(load_checkpoint(str(p1)), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.mvnw"
    path.write_bytes(b"XXXX\x01\x00")
    with pytest.raises(FormatError) as e:
        load_checkpoint(str(path))
    assert "byte 0" in str(e.value)


def test_truncated_payload_reports_offset(tmp_path):
    path = tmp_path / "ok.mvnw"
    save_checkpoint({"w": np.ones((2, 2), dtype=np.float32)}, str(path))
    blob = path.read_bytes()
    cut = path.with_suffix(".cut")
    cut.write_bytes(blob[:-5])
    with pytest.raises(FormatError) as e:
        load_checkpoint(str(cut))
    assert "byte" in str(e.value)
