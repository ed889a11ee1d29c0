"""Mini-batch training with the Dice loss."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gleason_seg.architectures import build_model
from gleason_seg.architectures.model import Model
from gleason_seg.atomic import write_csv
from gleason_seg.data.samples import Sample, resize_sample, stack_samples
from gleason_seg.engine.ops import LabelMap
from gleason_seg.engine.tensor import Tape, Tensor
from gleason_seg.errors import LabelRangeError, NonFiniteLossError
from gleason_seg.metrics.dice import dice_loss
from gleason_seg.training.checkpoint import save_checkpoint
from gleason_seg.training.config import TrainConfig
from gleason_seg.training.optim import OptimizerState, optimizer_step

logger = logging.getLogger(__name__)

LOSS_LOG_HEADER = ("step", "epoch", "loss")


def one_hot(labels: LabelMap, num_classes: int) -> Tensor:
    """(n, h, w) class indices -> exact {0, 1} tensor (n, num_classes, h, w).

    Raises:
        LabelRangeError: A label outside 0..num_classes-1.
    """
    values = np.asarray(labels, dtype=np.int64)
    if values.ndim == 2:
        values = values[None]
    bad = values[(values < 0) | (values >= num_classes)]
    if bad.size:
        raise LabelRangeError(int(bad.flat[0]), num_classes)
    encoded = np.eye(num_classes)[values]  # (n, h, w, k)
    return Tensor(encoded.transpose(0, 3, 1, 2))


@dataclass(frozen=True)
class LossRecord:
    step: int
    epoch: int
    loss: float


@dataclass
class TrainResult:
    model: Model
    history: list[LossRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]


def epoch_batches(order: np.ndarray, batch_size: int, min_batch: int) -> list[list[int]]:
    """Split a permutation into batches; a trailing batch smaller than ``min_batch`` joins the previous one."""
    batches = [order[i : i + batch_size].tolist() for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < min_batch:
        batches[-2].extend(batches.pop())
    return batches


def write_loss_log(history: Sequence[LossRecord], path: Path | str) -> Path:
    """Write ``step,epoch,loss`` rows; losses use round-trip precision."""
    rows: list[Sequence[object]] = [LOSS_LOG_HEADER]
    rows += [(r.step, r.epoch, repr(r.loss)) for r in history]
    return write_csv(path, rows)


def train_step(model: Model, opt: OptimizerState, images: Tensor, truth: Tensor) -> float:
    """One forward/backward/update; returns the loss before the update."""
    with Tape() as tape:
        probs = model(images)
        loss = dice_loss(probs, truth)
    value = loss.item()
    if not math.isfinite(value):
        return value
    grads = tape.backward(loss)
    params = {name: model.store[name] for name in model.trainable_names()}
    updated = optimizer_step(opt, params, {name: grads[t] for name, t in params.items()})
    for name, tensor in updated.items():
        model.store.set(name, tensor)
    return value


def train(config: TrainConfig, dataset: Sequence[Sample], model: Model | None = None) -> TrainResult:
    """Train ``model`` (or a fresh one built from ``config.arch``) on ``dataset``.

    Data order, initialisation and updates all derive from ``config.seed``.
    The loss log and checkpoint are rewritten at the end of every epoch.

    Raises:
        ValueError: Empty dataset.
        NonFiniteLossError: The loss became NaN/Inf.
    """
    if not dataset:
        raise ValueError("Training dataset is empty")
    size = config.resolved_input_size
    samples = [resize_sample(s, size) for s in dataset]
    if model is None:
        model = build_model(config.arch, seed=config.seed)
    model.train()
    rng = np.random.default_rng(config.seed)
    opt = OptimizerState(config.optimizer)
    min_batch = 2 if config.uses_batch_norm else 1
    result = TrainResult(model=model)

    logger.info(
        f"Training {config.arch.name} ({model.parameter_count()} parameters) on {len(samples)} samples "
        f"at {size}x{size}, {config.epochs} epoch(s), batch {config.batch_size}, {config.optimizer.kind}"
    )
    step = 0
    for epoch in range(config.epochs):
        for batch in epoch_batches(rng.permutation(len(samples)), config.batch_size, min_batch):
            images, masks = stack_samples([samples[i] for i in batch])
            loss = train_step(model, opt, images, one_hot(masks, config.arch.num_classes))
            step += 1
            if not math.isfinite(loss):
                raise NonFiniteLossError(step, epoch, loss)
            result.history.append(LossRecord(step=step, epoch=epoch, loss=loss))
            if step % config.log_interval == 0 or step == 1:
                logger.info(f"step={step} epoch={epoch} loss={loss:.6f}")
            if config.max_steps is not None and step >= config.max_steps:
                break
        _end_of_epoch(config, result)
        if config.max_steps is not None and step >= config.max_steps:
            logger.info(f"Reached max_steps={config.max_steps}")
            break

    model.eval()
    return result


def _end_of_epoch(config: TrainConfig, result: TrainResult) -> None:
    if config.loss_log is not None:
        write_loss_log(result.history, config.loss_log)
    if config.checkpoint is not None:
        save_checkpoint(result.model, config.checkpoint)
