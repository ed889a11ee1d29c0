"""Unit tests for the binary checkpoint format."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from gleason_seg.architectures import build_model, preset_spec
from gleason_seg.engine import Tensor
from gleason_seg.errors import CheckpointFormatError
from gleason_seg.training import load_checkpoint, save_checkpoint
from gleason_seg.training.checkpoint import FORMAT_VERSION, MAGIC, decode_checkpoint, encode_checkpoint


@pytest.fixture
def trained_like_model(tiny_resunet_spec, rng):
    """A ResU-Net whose every tensor, buffers included, differs from a fresh build."""
    model = build_model(tiny_resunet_spec, seed=11)
    for name, tensor in model.parameters.items():
        value = rng.uniform(0.5, 2.0, size=tensor.shape) if "running_var" in name else rng.normal(size=tensor.shape)
        model.store.set(name, value)
    return model


@pytest.mark.unit
class TestCheckpoint:
    def test_header(self, tiny_unet_spec):
        data = encode_checkpoint(build_model(tiny_unet_spec))
        assert data[:4] == MAGIC
        assert struct.unpack("<I", data[4:8])[0] == FORMAT_VERSION
        (spec_len,) = struct.unpack("<I", data[8:12])
        assert data[12 : 12 + spec_len].decode() == tiny_unet_spec.to_canonical_text()

    def test_round_trip_is_bit_exact(self, trained_like_model, tmp_path):
        path = save_checkpoint(trained_like_model, tmp_path / "model.sgck")
        restored = load_checkpoint(path)
        assert restored.spec == trained_like_model.spec
        assert list(restored.parameters) == list(trained_like_model.parameters)
        for name, tensor in trained_like_model.parameters.items():
            assert restored.parameters[name].data.tobytes() == tensor.data.tobytes(), name

    def test_loaded_model_is_in_eval_mode_and_predicts_identically(self, trained_like_model, tmp_path, rng):
        trained_like_model.eval()
        restored = load_checkpoint(save_checkpoint(trained_like_model, tmp_path / "m.sgck"))
        assert restored.mode == "eval"
        x = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        np.testing.assert_array_equal(restored(x).data, trained_like_model(x).data)

    def test_restored_parameters_stay_trainable(self, trained_like_model):
        restored = decode_checkpoint(encode_checkpoint(trained_like_model))
        assert restored.trainable_names() == trained_like_model.trainable_names()

    @pytest.mark.parametrize(("preset", "name"), [("tiny-segnet", "head.weight"), ("tiny-fcn8", "score8.weight")])
    def test_other_families(self, preset, name, tmp_path):
        model = build_model(preset_spec(preset), seed=4)
        restored = load_checkpoint(save_checkpoint(model, tmp_path / "m.sgck"))
        assert restored.spec.name == model.spec.name
        np.testing.assert_array_equal(restored.parameters[name].data, model.parameters[name].data)

    def test_no_temporary_files_left(self, tiny_unet_spec, tmp_path):
        save_checkpoint(build_model(tiny_unet_spec), tmp_path / "m.sgck")
        assert [p.name for p in tmp_path.iterdir()] == ["m.sgck"]


@pytest.mark.unit
class TestCorruptCheckpoints:
    @pytest.fixture
    def data(self, tiny_unet_spec) -> bytes:
        return encode_checkpoint(build_model(tiny_unet_spec))

    def test_bad_magic(self, data):
        with pytest.raises(CheckpointFormatError, match="magic"):
            decode_checkpoint(b"XXXX" + data[4:])

    def test_bad_version(self, data):
        with pytest.raises(CheckpointFormatError, match="version 2"):
            decode_checkpoint(data[:4] + struct.pack("<I", 2) + data[8:])

    def test_truncated(self, data):
        with pytest.raises(CheckpointFormatError, match="truncated"):
            decode_checkpoint(data[:-5])

    def test_trailing_bytes(self, data):
        with pytest.raises(CheckpointFormatError, match="trailing"):
            decode_checkpoint(data + b"\0")

    def test_invalid_spec(self, data):
        (spec_len,) = struct.unpack("<I", data[8:12])
        text = data[12 : 12 + spec_len].replace(b"family=unet", b"family=vnet")
        with pytest.raises(CheckpointFormatError, match="spec"):
            decode_checkpoint(data[:8] + struct.pack("<I", len(text)) + text + data[12 + spec_len :])

    def test_parameter_count_mismatch(self, data):
        (spec_len,) = struct.unpack("<I", data[8:12])
        offset = 12 + spec_len
        with pytest.raises(CheckpointFormatError, match="parameters stored"):
            decode_checkpoint(data[:offset] + struct.pack("<I", 3) + data[offset + 4 :])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(tmp_path / "absent.sgck")
