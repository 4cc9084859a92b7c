from __future__ import annotations

import struct

import numpy as np
import pytest

from moldiff.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


@pytest.fixture
def ckpt(tmp_path, rng):
    tensors = {"a": rng.standard_normal((3, 4)), "b": np.arange(5.0), "s": np.array(2.5)}
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, tensors, {"step": 7, "vocab": ["x", "y"]})
    return path, tensors


class TestCheckpoint:
    def test_round_trip(self, ckpt):
        path, tensors = ckpt
        got, meta = load_checkpoint(path)
        assert meta["step"] == 7 and meta["vocab"] == ["x", "y"]
        for k, v in tensors.items():
            assert got[k].dtype == np.float32 and got[k].shape == np.shape(v)
            assert np.array_equal(got[k], np.asarray(v, dtype=np.float32))

    def test_no_temp_file_left(self, ckpt):
        path, _ = ckpt
        assert [p.name for p in path.parent.iterdir()] == [path.name]

    def test_bad_magic(self, ckpt):
        path, _ = ckpt
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, ckpt):
        path, _ = ckpt
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC):len(MAGIC) + 4] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    @pytest.mark.parametrize("cut", [1, 9, 40])
    def test_truncated(self, ckpt, cut):
        path, _ = ckpt
        raw = path.read_bytes()
        path.write_bytes(raw[:-cut])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_truncated_header(self, ckpt):
        path, _ = ckpt
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_flipped_data_byte(self, ckpt):
        path, _ = ckpt
        raw = bytearray(path.read_bytes())
        raw[-20] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_corrupted_metadata(self, ckpt):
        path, _ = ckpt
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC) + 12] = ord("!")
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="metadata"):
            load_checkpoint(path)

    def test_empty_file(self, tmp_path):
        (tmp_path / "e").write_bytes(b"")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "e")
