"""
Trainer Module
==============
Training loop for the reconstruction network:
- AdamW with decoupled weight decay
- learning rate held for the first half, then decayed (cosine by default)
- full-waveform MSE loss or a gap-weighted variant
- time-reversal augmentation, seeded shuffling, per-epoch loss history
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config import templates
from dataset import mirror_augment
from metrics import ModelReconstructor, get_evaluator
from models import EpochRecord, TrainConfig
from xinet import autodiff as ad
from xinet.checkpoint import Checkpoint, checkpoint_from_model
from xinet.errors import ConfigError, NumericError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class OptState:
    """Per-parameter Adam moments and the shared step counter."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: List[EpochRecord]
    opt_state: OptState


def init_opt_state(params):
    """Zero moments shaped like each parameter."""
    return OptState(0, {n: np.zeros_like(p.data) for n, p in params.items()},
                    {n: np.zeros_like(p.data) for n, p in params.items()})


# =========================================
# OPTIMIZER
# =========================================
def adamw_step(params, state, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    One AdamW update, in place.

    Parameters:
    - params: dict name -> Tensor; missing .grad counts as zero
    - state: OptState (moments created on first use)
    - lr, weight_decay: step size and decoupled decay rate
    """
    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        if grad.shape != p.shape:
            raise ShapeError(f"gradient of '{name}' has shape {grad.shape}, parameter {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.shape:
            raise ShapeError(f"moment of '{name}' has shape {m.shape}, parameter {p.shape}")

        # Decoupled weight decay
        if weight_decay:
            p.data = p.data - lr * weight_decay * p.data

        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = (m / bias1) / (np.sqrt(v / bias2) + eps)
        p.data = (p.data - lr * update).astype(p.dtype, copy=False)


# =========================================
# LEARNING RATE SCHEDULE
# =========================================
def lr_at(epoch, total, base_lr, schedule='constant_then_cosine', final_ratio=0.01):
    """
    Learning rate of an epoch.

    base_lr while epoch < total / 2; over the second half either a cosine
    from base_lr down to base_lr * final_ratio at the last epoch, or a step
    decay (x0.1 at the half, final_ratio from three quarters on).
    """
    if not 0 <= epoch < total:
        raise ConfigError(f"epoch {epoch} outside [0, {total})")
    if schedule == 'constant' or epoch < total / 2:
        return base_lr
    final_lr = base_lr * final_ratio
    if schedule == 'constant_then_step':
        return base_lr * 0.1 if epoch < 3 * total / 4 else final_lr
    if schedule != 'constant_then_cosine':
        raise ConfigError(f"unknown schedule '{schedule}'")
    start = math.ceil(total / 2)
    span = max(1, (total - 1) - start)
    progress = min(1.0, (epoch - start) / span)
    return final_lr + (base_lr - final_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


# =========================================
# LOSS
# =========================================
def gap_weights(gap_mask, gap_loss_lambda):
    """1 inside the gap, lambda elsewhere."""
    return np.where(gap_mask, 1.0, gap_loss_lambda)


def compute_loss(model, inputs, targets, gap_mask, cfg):
    """
    Forward pass and loss on a batch.

    Parameters:
    - inputs, targets: arrays [B, L, 1]
    - gap_mask: bool array [B, L, 1]
    - cfg: TrainConfig

    Returns:
    - scalar Tensor: mean squared error, or (sum_gap d^2 + lambda * sum_rest d^2) / N
    """
    output = model(ad.Tensor(inputs))
    if cfg.loss_scope == 'gap_weighted':
        weights = gap_weights(gap_mask, cfg.gap_loss_lambda).astype(output.dtype)
        return ad.weighted_mse_loss(output, targets, weights)
    return ad.mse_loss(output, targets)


def parameter_norm(model):
    return float(np.sqrt(sum(float(np.sum(p.data.astype(np.float64) ** 2)) for p in model.parameters())))


def _stack(samples, dtype):
    inputs = np.stack([s.input.samples for s in samples])[..., None].astype(dtype)
    targets = np.stack([s.target.samples for s in samples])[..., None].astype(dtype)
    mask = np.zeros(inputs.shape, dtype=bool)
    for i, s in enumerate(samples):
        mask[i, s.gap.start_index:s.gap.end_index, 0] = True
    return inputs, targets, mask


# =========================================
# TRAINING LOOP
# =========================================
def train(model, samples, cfg=None, val_samples=None, opt_state=None, start_epoch=0):
    """
    Training a model on a list of samples.

    Parameters:
    - model: XiNetModel
    - samples: training Samples (time-reversed copies added when cfg.mirror_augment)
    - cfg: TrainConfig
    - val_samples: optional Samples scored by gap MAE after each epoch
    - opt_state / start_epoch: resume point from a checkpoint

    Returns:
    - TrainResult with the final checkpoint and the loss history
    """
    cfg = cfg or TrainConfig()
    if not samples:
        raise ConfigError("cannot train on an empty dataset")
    if cfg.mirror_augment:
        samples = mirror_augment(samples)
    inputs, targets, mask = _stack(samples, model.dtype)
    params = dict(model.named_parameters())
    state = opt_state or init_opt_state(params)
    rng = np.random.default_rng(cfg.seed)
    tape = ad.get_tape()
    evaluator = get_evaluator()
    history = []

    logger.info("training %s model on %d samples for %d epochs", model.config.variant,
                len(samples), cfg.epochs)
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at(epoch, cfg.epochs, cfg.base_lr, cfg.schedule, cfg.final_lr_ratio)
        order = rng.permutation(len(samples))
        total_loss = 0.0
        for batch_no, start in enumerate(range(0, len(order), cfg.batch_size)):
            index = order[start:start + cfg.batch_size]
            tape.reset()
            model.zero_grad()
            loss = compute_loss(model, inputs[index], targets[index], mask[index], cfg)
            value = loss.item()
            if not math.isfinite(value):
                tape.reset()
                raise NumericError(f"loss is {value} at epoch {epoch}, batch {batch_no} "
                                   f"(parameter norm {parameter_norm(model):.6g})")
            ad.backward(loss)
            tape.reset()
            adamw_step(params, state, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)
            total_loss += value * len(index)

        val_mae = None
        if val_samples:
            val_mae = evaluator.evaluate(val_samples, ModelReconstructor(model, cfg.batch_size)).mae_mean
        record = EpochRecord(epoch=epoch, lr=lr, train_loss=total_loss / len(samples), val_gap_mae=val_mae)
        history.append(record)
        logger.info("epoch %d lr %.3e train loss %.6f val gap MAE %s", epoch, lr, record.train_loss,
                    'n/a' if val_mae is None else f"{val_mae:.6f}")

    checkpoint = checkpoint_from_model(model, state, epoch=cfg.epochs)
    return TrainResult(checkpoint, history, state)


def write_history_csv(path, history):
    """Writing the loss history as CSV (epoch, lr, train_loss, val_gap_mae)."""
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(templates.HISTORY_CSV_HEADER)
        for record in history:
            writer.writerow([record.epoch, repr(record.lr), repr(record.train_loss),
                             '' if record.val_gap_mae is None else repr(record.val_gap_mae)])
