"""Pretrain/fine-tune driver: batching, epoch loop, logging, best-epoch pick."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySplit, NonFiniteLoss
from .optim import AdamWState, adamw_step
from .vit import (
    ModelParams,
    NormStats,
    TinyViTConfig,
    backward,
    init_params,
    normalize_images,
    predict_celsius,
    sample_mask,
)


@dataclass
class TrainSchedule:
    """Knobs of one training run; defaults follow the fine-tuning recipe."""

    epochs: int = 100
    pretrain_epochs: int = 0
    batch_size: int = 16
    lr: float = 6e-5
    weight_decay: float = 0.0
    seed: int = 0
    early_stop_val_mae: float | None = None

    def __post_init__(self):
        if self.epochs > 100:
            raise ValueError("schedule caps at 100 epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class TrainingLog:
    """Per-epoch rows: (epoch, phase, loss, val_mae)."""

    rows: list[tuple[int, str, float, float]] = field(default_factory=list)

    def add(self, epoch: int, phase: str, loss: float, val_mae: float):
        self.rows.append((epoch, phase, float(loss), float(val_mae)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "phase", "loss", "val_mae"])
        for epoch, phase, loss, val_mae in self.rows:
            writer.writerow([epoch, phase, repr(loss), repr(val_mae)])
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, TrainingLog):
            return NotImplemented
        return self.rows == other.rows

    def best_val_mae(self) -> float:
        vals = [r[3] for r in self.rows if r[1] == "finetune" and np.isfinite(r[3])]
        return min(vals) if vals else float("nan")


@dataclass
class ArrayDataset:
    """Training tensors: images (B, C, H, W), labels (B, H, W), weights (B, H, W)."""

    images: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4 or self.labels.ndim != 3:
            raise ValueError("images must be (B,C,H,W) and labels (B,H,W)")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("image/label count mismatch")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, idx) -> "ArrayDataset":
        return ArrayDataset(self.images[idx], self.labels[idx], self.weights[idx])


def samples_to_dataset(samples) -> ArrayDataset:
    """Stack Sample objects (ingest_formats) into contiguous training arrays."""
    from .vit import stack_to_channels

    images, labels, weights = [], [], []
    for sample in samples:
        chans, valid = stack_to_channels(sample.inputs)
        label = sample.label
        w = (valid & ~label.nodata_mask).astype(np.float64)
        images.append(chans)
        labels.append(np.where(label.nodata_mask, 0.0, label.values))
        weights.append(w)
    return ArrayDataset(np.stack(images), np.stack(labels), np.stack(weights))


def _val_mae(params: ModelParams, data: ArrayDataset, batch_size: int) -> float:
    total, count = 0.0, 0.0
    for lo in range(0, len(data), batch_size):
        sl = slice(lo, lo + batch_size)
        pred = predict_celsius(params, data.images[sl])
        w = data.weights[sl]
        total += float((w * np.abs(pred - data.labels[sl])).sum())
        count += float(w.sum())
    return total / count if count > 0 else float("nan")


def train(train_data: ArrayDataset, val_data: ArrayDataset,
          config: TinyViTConfig, schedule: TrainSchedule,
          initial: ModelParams | None = None) -> tuple[ModelParams, TrainingLog]:
    """Optional masked-autoencoding pretraining followed by regression fine-tuning.

    Returns the parameters of the best-val-MAE fine-tuning epoch (or the
    initialization when epochs == 0) plus the per-epoch log. Fully
    deterministic for a fixed seed. `initial` warm-starts from an existing
    checkpoint; normalization statistics are refit on the train split either
    way.
    """
    if len(train_data) == 0:
        raise EmptySplit("training requires a non-empty train set")
    rng = np.random.default_rng(schedule.seed)
    params = initial.copy() if initial is not None else init_params(config, schedule.seed)
    params.norm = NormStats.fit(train_data.images, train_data.labels, train_data.weights)
    log = TrainingLog()

    n_tokens = None

    if schedule.pretrain_epochs > 0:
        opt = AdamWState(lr=schedule.lr, weight_decay=schedule.weight_decay)
        for epoch in range(schedule.pretrain_epochs):
            order = rng.permutation(len(train_data))
            losses = []
            for lo in range(0, len(order), schedule.batch_size):
                idx = order[lo : lo + schedule.batch_size]
                images = normalize_images(params, train_data.images[idx])
                if n_tokens is None:
                    h, w = images.shape[2], images.shape[3]
                    n_tokens = (h // config.token_size) * (w // config.token_size)
                mask = sample_mask(rng, n_tokens, config.mask_ratio)
                loss, grads = backward(params, (images, mask), "mae")
                params.tensors = adamw_step(params.tensors, grads, opt)
                losses.append(loss)
            log.add(epoch, "pretrain", float(np.mean(losses)), float("nan"))

    best = params.copy()
    best_mae = float("inf")
    if schedule.epochs > 0:
        opt = AdamWState(lr=schedule.lr, weight_decay=schedule.weight_decay)
        for epoch in range(schedule.epochs):
            order = rng.permutation(len(train_data))
            losses = []
            for lo in range(0, len(order), schedule.batch_size):
                idx = order[lo : lo + schedule.batch_size]
                batch = (train_data.images[idx], train_data.labels[idx],
                         train_data.weights[idx])
                loss, grads = backward(params, batch, "regress")
                params.tensors = adamw_step(params.tensors, grads, opt)
                losses.append(loss)
            val_mae = _val_mae(params, val_data, schedule.batch_size) \
                if len(val_data) else float("nan")
            log.add(epoch, "finetune", float(np.mean(losses)), val_mae)
            params.epoch = epoch
            if np.isfinite(val_mae) and val_mae < best_mae:
                best_mae = val_mae
                best = params.copy()
            if not np.isfinite(np.mean(losses)):
                raise NonFiniteLoss("training diverged")
            if (schedule.early_stop_val_mae is not None
                    and np.isfinite(val_mae)
                    and val_mae < schedule.early_stop_val_mae):
                break
        if not np.isfinite(best_mae) and len(val_data) == 0:
            best = params.copy()

    return best, log
