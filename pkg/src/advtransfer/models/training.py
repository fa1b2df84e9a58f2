"""Mini-batch Adam training with deterministic shuffling."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .. import rng as rngmod
from ..engine import AdamState, Tensor, adam_step, ops
from ..errors import TrainingError
from .network import Model, accuracy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-4
    train_batch: int = 64
    test_batch: int = 100
    seed: int = 0
    beta1: float = 0.99
    beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.train_batch < 1 or self.test_batch < 1:
            raise ValueError("batch sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    epoch_losses: List[float] = field(default_factory=list)
    batch_losses: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    test_accuracy: float = float("nan")
    initial_test_accuracy: float = float("nan")
    wall_clock_s: float = 0.0
    checkpoint_path: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def fit(model: Model, x: np.ndarray, y: np.ndarray, config: TrainConfig, report: TrainReport, val=None) -> TrainReport:
    """Run ``config.epochs`` epochs of shuffled mini-batch Adam on (x, y).

    Per-epoch losses (and validation accuracy when ``val`` is given) are
    appended to ``report``.
    """
    state = AdamState(
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.adam_epsilon,
    )
    shuffle = rngmod.stream(config.seed, "shuffle")
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(y))
        losses = []
        for lo in range(0, len(order), config.train_batch):
            idx = order[lo : lo + config.train_batch]
            logits = model.forward(Tensor(x[idx]), param_grads=True)
            loss = ops.softmax_crossentropy(logits, y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch + 1}, batch {lo // config.train_batch + 1}")
            for p in model.params.values():
                p.zero_grad()
            loss.backward()
            adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state)
            losses.append(value)
        for p in model.params.values():
            p.zero_grad()
        report.batch_losses.extend(losses)
        report.epoch_losses.append(float(np.mean(losses)))
        if val is not None:
            report.val_accuracy.append(accuracy(model, val[0], val[1], config.test_batch))
        logger.info(
            "epoch %d/%d loss %.4f%s",
            epoch + 1,
            config.epochs,
            report.epoch_losses[-1],
            f" val_acc {report.val_accuracy[-1]:.4f}" if val is not None else "",
        )
    return report


def train(model: Model, dataset, config: TrainConfig, checkpoint_path=None) -> TrainReport:
    """Train ``model`` in place on ``dataset``'s train split.

    Reports per-epoch mean loss, validation accuracy after each epoch and the
    final test accuracy. If ``checkpoint_path`` is given a checkpoint is
    written on completion.
    """
    from .checkpoint import save_checkpoint

    for split in ("train", "val", "test"):
        if len(dataset.split_indices(split)) == 0:
            raise ValueError(f"dataset split {split!r} is empty")
    x_train, y_train = dataset.arrays("train")
    x_test, y_test = dataset.arrays("test")

    report = TrainReport()
    start = time.perf_counter()
    report.initial_test_accuracy = accuracy(model, x_test, y_test, config.test_batch)
    fit(model, x_train, y_train, config, report, val=dataset.arrays("val"))
    report.test_accuracy = accuracy(model, x_test, y_test, config.test_batch)
    report.wall_clock_s = time.perf_counter() - start
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            model,
            train_config=config,
            dataset_fingerprint=dataset.fingerprint,
            test_accuracy=report.test_accuracy,
        )
        report.checkpoint_path = str(checkpoint_path)
    return report
