"""Training loop (SGD with momentum), loss, and mask prediction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyDataset, ShapeMismatch
from ..fusion import FusionInput
from . import layers as L
from .model import DcmConfig, NetworkWeights, _backward_batch, _forward_batch, init_weights


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 40
    max_steps: int = 200
    seed: int = 0
    threshold: float = 0.5
    val_every: int = 10  # validation cadence in optimizer steps

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.val_every < 1:
            raise ValueError("val_every must be >= 1")


@dataclass
class TrainResult:
    weights: NetworkWeights
    log: list[dict] = field(default_factory=list)
    best_val_iou: float = float("nan")
    best_step: int = -1


def _stack_batch(batch, dtype):
    """Stack (FusionInput, mask) pairs into batched arrays; masks must be 0/1."""
    if not batch:
        raise EmptyDataset("empty batch")
    tags = batch[0][0].tags
    for sample, _ in batch:
        if sample.tags != tags:
            raise ShapeMismatch(f"mixed modality tags in one batch: {sample.tags} vs {tags}")
    try:
        x1 = np.stack([s.input1 for s, _ in batch]).astype(dtype, copy=False)
        x2 = np.stack([s.input2 for s, _ in batch]).astype(dtype, copy=False)
        masks = np.stack([np.asarray(m) for _, m in batch])
    except ValueError as exc:
        raise ShapeMismatch(f"batch samples disagree in shape: {exc}") from None
    if masks.shape != x1.shape[:3]:
        raise ShapeMismatch(f"masks {masks.shape} do not match inputs {x1.shape[:3]}")
    if not np.isin(masks, (0, 1)).all():
        raise ValueError("masks must be binary")
    return x1, x2, masks.astype(dtype), tags


def loss_and_gradients(batch, weights: NetworkWeights):
    """Mean BCE loss over a batch plus gradients for every named tensor."""
    x1, x2, masks, tags = _stack_batch(batch, weights.dtype)
    logits, tape = _forward_batch(x1, x2, tags, weights)
    loss, dlogits = L.bce_with_logits(logits, masks[..., None])
    grads = _backward_batch(dlogits, tape, weights)
    return loss, grads


def predict_mask(logits: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binarize logits: traversable iff sigmoid(logit) >= threshold."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    z = np.asarray(logits)
    if z.ndim == 3 and z.shape[-1] == 1:
        z = z[..., 0]
    return L.sigmoid(z) >= threshold


def _validation_iou(weights, x1, x2, tags, masks, threshold, chunk):
    tp = fp = fn = 0
    for lo in range(0, x1.shape[0], chunk):
        logits, _ = _forward_batch(x1[lo : lo + chunk], x2[lo : lo + chunk], tags, weights)
        pred = L.sigmoid(logits[..., 0]) >= threshold
        truth = masks[lo : lo + chunk] > 0.5
        tp += int(np.count_nonzero(pred & truth))
        fp += int(np.count_nonzero(pred & ~truth))
        fn += int(np.count_nonzero(~pred & truth))
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


def train(
    train_samples,
    val_samples=(),
    train_cfg: TrainConfig | None = None,
    config: DcmConfig | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """SGDM over shuffled minibatches: v <- mu*v - lr*g, w <- w + v.

    Weights snapshot with the best validation IoU wins; with no validation
    split the final weights are returned. Fixed seed fixes the init, the
    batch order, and therefore the result.
    """
    train_cfg = train_cfg or TrainConfig()
    samples = list(train_samples)
    if not samples:
        raise EmptyDataset("training split is empty")
    x1, x2, masks, tags = _stack_batch(samples, np.float32)
    mode = samples[0][0].mode.value
    val = list(val_samples)
    if val:
        vx1, vx2, vmasks, vtags = _stack_batch(val, np.float32)
        if vtags != tags:
            raise ShapeMismatch(f"validation tags {vtags} differ from training tags {tags}")

    weights = init_weights(config, seed=train_cfg.seed, dtype=np.float32, mode=mode)
    velocity = {name: np.zeros_like(p) for name, p in weights.params.items()}
    rng = np.random.default_rng(train_cfg.seed)
    n = x1.shape[0]
    mu, lr = train_cfg.momentum, train_cfg.learning_rate

    log: list[dict] = []
    best_iou, best_step, best = float("-inf"), -1, None
    step = 0
    while step < train_cfg.max_steps:
        order = rng.permutation(n)
        for lo in range(0, n, train_cfg.batch_size):
            if step >= train_cfg.max_steps:
                break
            idx = order[lo : lo + train_cfg.batch_size]
            logits, tape = _forward_batch(x1[idx], x2[idx], tags, weights)
            loss, dlogits = L.bce_with_logits(logits, masks[idx][..., None])
            grads = _backward_batch(dlogits, tape, weights)
            for name, p in weights.params.items():
                v = velocity[name]
                v *= mu
                v -= lr * grads[name]
                p += v
            step += 1
            row = {"step": step, "loss": loss, "val_iou": None}
            if val and (step % train_cfg.val_every == 0 or step == train_cfg.max_steps):
                iou = _validation_iou(
                    weights, vx1, vx2, tags, vmasks, train_cfg.threshold, train_cfg.batch_size
                )
                row["val_iou"] = iou
                if iou > best_iou:
                    best_iou, best_step, best = iou, step, weights.copy()
            log.append(row)

    result = TrainResult(
        weights=best if best is not None else weights,
        log=log,
        best_val_iou=best_iou if best is not None else float("nan"),
        best_step=best_step,
    )
    if log_path is not None:
        write_training_log(log, log_path)
    return result


def write_training_log(log, path: str | Path) -> None:
    """CSV with one row per optimizer step: step, loss, val_iou (may be blank)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "val_iou"])
        for row in log:
            val = "" if row["val_iou"] is None else f"{row['val_iou']:.6f}"
            writer.writerow([row["step"], f"{row['loss']:.6f}", val])


def read_training_log(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "step": int(row["step"]),
                    "loss": float(row["loss"]),
                    "val_iou": float(row["val_iou"]) if row["val_iou"] else None,
                }
            )
    return out
