"""Unit tests for TrainConfig validation and config-file parsing."""

from __future__ import annotations

import pytest
from pydantic import ValidationError

from gleason_seg.architectures import preset_spec
from gleason_seg.training import TrainConfig, load_config_file
from gleason_seg.training.config import parse_key_values


@pytest.mark.unit
class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig(arch=preset_spec("tiny-unet"))
        assert (config.epochs, config.batch_size, config.loss) == (10, 2, "dice")
        assert config.optimizer.kind == "adam"
        assert config.resolved_input_size == 32
        assert not config.uses_batch_norm

    def test_input_size_override(self):
        assert TrainConfig(arch=preset_spec("tiny-unet"), input_size=64).resolved_input_size == 64

    def test_resunet_needs_batch_of_two(self):
        with pytest.raises(ValidationError, match="batch"):
            TrainConfig(arch=preset_spec("tiny-resunet"), batch_size=1)
        assert TrainConfig(arch=preset_spec("tiny-resunet"), batch_size=2).uses_batch_norm

    def test_unet_allows_batch_of_one(self):
        assert TrainConfig(arch=preset_spec("tiny-unet"), batch_size=1).batch_size == 1

    def test_input_size_divisibility(self):
        with pytest.raises(ValidationError, match="divisible"):
            TrainConfig(arch=preset_spec("tiny-fcn8"), input_size=48)

    @pytest.mark.parametrize("field", [{"epochs": 0}, {"batch_size": 0}, {"max_steps": 0}, {"loss": "ce"}])
    def test_invalid_fields(self, field):
        with pytest.raises(ValidationError):
            TrainConfig(arch=preset_spec("tiny-unet"), **field)

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            TrainConfig(arch=preset_spec("tiny-unet"), learning_rate=0.1)


@pytest.mark.unit
class TestConfigFiles:
    def test_key_values(self):
        text = "# training run\nepochs = 5\n\nlog-interval=2  # every other step\narch=tiny-unet\n"
        assert parse_key_values(text) == {"epochs": "5", "log_interval": "2", "arch": "tiny-unet"}

    def test_key_value_errors(self):
        with pytest.raises(ValueError, match="cfg:2"):
            parse_key_values("epochs=1\nnot a pair\n", "cfg")
        with pytest.raises(ValueError, match="key=value"):
            parse_key_values("=3\n")

    def test_plain_file(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("lr=0.01\nbatch=4\n")
        assert load_config_file(path) == {"lr": "0.01", "batch": "4"}

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "train.yml"
        path.write_text("lr: 0.01\nmax-steps: 20\nexclude_bg: true\n")
        assert load_config_file(path) == {"lr": 0.01, "max_steps": 20, "exclude_bg": True}

    def test_yaml_must_be_mapping(self, tmp_path):
        path = tmp_path / "train.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError, match="mapping"):
            load_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config_file(tmp_path / "absent.cfg")
