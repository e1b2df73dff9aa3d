"""Training loop: summed binary cross-entropy over both branches, SGD momentum.

The per-step loss is bce(core_map, core_mask) + bce(delta_map, delta_mask),
summed over every pixel in the mini-batch.  Gradients fed to the optimizer
are normalized by the number of image pixels in the batch so that the same
learning rate behaves consistently across image sizes and batch sizes; the
raw summed loss is what gets logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CoreDeltaNet
from .optim import SGD
from .tensor import Tensor, add, backward, bce_loss, scale


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 100
    dropout_rate: float = 0.5
    width_divisor: int = 1
    seed: int = 0
    max_steps: int | None = None


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)  # mean summed loss per step
    epoch_pixel_bce: list[float] = field(default_factory=list)  # per pixel, per branch
    steps: int = 0


def _validate_dataset(dataset):
    if not dataset:
        raise ValueError("training dataset is empty")
    h0, w0 = dataset[0][0].shape
    for i, (img, core_mask, delta_mask) in enumerate(dataset):
        if img.shape != (h0, w0) or core_mask.shape != (h0, w0) or delta_mask.shape != (h0, w0):
            raise ValueError(f"dataset entry {i} dims differ from entry 0 ({w0}x{h0})")
        if h0 % 16 or w0 % 16:
            raise ValueError(f"dataset images must be pre-padded to multiples of 16, got {w0}x{h0}")
        for name, mask in (("core", core_mask), ("delta", delta_mask)):
            if not np.all((mask == 0) | (mask == 1)):
                raise ValueError(f"dataset entry {i}: {name} mask is not binary")


def train(model: CoreDeltaNet, dataset: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
          config: TrainConfig) -> TrainLog:
    """dataset entries are (image, core_mask, delta_mask), all (H, W) arrays
    with H, W multiples of 16; masks binary.  Mini-batches are reshuffled each
    epoch from the seeded generator, so a fixed seed reproduces the run."""
    _validate_dataset(dataset)
    shuffle_rng, dropout_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2)
    ]
    opt = SGD(model.parameters(), lr=config.learning_rate, momentum=config.momentum)
    log = TrainLog()
    n = len(dataset)
    dtype = model.dtype
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        pixel_bces = []
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            images = Tensor(np.stack([b[0] for b in batch])[:, None].astype(dtype))
            core_t = Tensor(np.stack([b[1] for b in batch])[:, None].astype(dtype))
            delta_t = Tensor(np.stack([b[2] for b in batch])[:, None].astype(dtype))
            core_map, delta_map = model.forward(images, training=True, rng=dropout_rng)
            loss = add(bce_loss(core_map, core_t), bce_loss(delta_map, delta_t))
            n_pixels = images.data.size
            opt.zero_grad()
            backward(scale(loss, 1.0 / n_pixels))
            opt.step()
            losses.append(float(loss.data))
            pixel_bces.append(float(loss.data) / (2 * n_pixels))
            log.steps += 1
            if config.max_steps is not None and log.steps >= config.max_steps:
                log.epoch_loss.append(sum(losses) / len(losses))
                log.epoch_pixel_bce.append(sum(pixel_bces) / len(pixel_bces))
                return log
        log.epoch_loss.append(sum(losses) / len(losses))
        log.epoch_pixel_bce.append(sum(pixel_bces) / len(pixel_bces))
    return log
