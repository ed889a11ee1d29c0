"""Training configuration and config-file loading.

Config files hold the same keys as the CLI flags, either as ``key=value``
lines (``#`` comments allowed) or, for ``.yml``/``.yaml`` files, as a YAML
mapping. Values given on the command line win.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.training.optim import OptimizerConfig

logger = logging.getLogger(__name__)

YAML_SUFFIXES = (".yml", ".yaml")


class TrainConfig(BaseModel):
    """Everything one training run depends on; equal configs give bit-identical runs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    arch: ArchitectureSpec
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=2, ge=1)
    seed: int = 0
    optimizer: OptimizerConfig = OptimizerConfig()
    input_size: int | None = None
    loss: Literal["dice"] = "dice"
    checkpoint: Path | None = None
    loss_log: Path | None = None
    log_interval: int = Field(default=10, ge=1)
    max_steps: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_contract(self) -> TrainConfig:
        if self.arch.family == "resunet" and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 for architectures with batch normalisation")
        size = self.resolved_input_size
        if size % self.arch.size_multiple:
            raise ValueError(f"input_size {size} must be divisible by {self.arch.size_multiple} for {self.arch.name}")
        return self

    @property
    def resolved_input_size(self) -> int:
        return self.input_size if self.input_size is not None else self.arch.input_size

    @property
    def uses_batch_norm(self) -> bool:
        return self.arch.family == "resunet"


def parse_key_values(text: str, source: Path | str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored.

    Raises:
        ValueError: A line without ``=`` or an empty key.
    """
    values: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"{source}:{number}: expected key=value, got {line.strip()!r}")
        values[key.replace("-", "_")] = value.strip()
    return values


def load_config_file(path: Path | str) -> dict[str, object]:
    """Read a config file into a flat mapping of option name to value.

    Raises:
        OSError: The file cannot be read.
        ValueError: Malformed content, or YAML that is not a mapping.
    """
    source = Path(path)
    text = source.read_text()
    if source.suffix.lower() in YAML_SUFFIXES:
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{source}: YAML config must be a mapping, got {type(data).__name__}")
        values: dict[str, object] = {str(k).replace("-", "_"): v for k, v in data.items()}
    else:
        values = dict(parse_key_values(text, source))
    logger.debug(f"Read {len(values)} option(s) from {source}")
    return values
