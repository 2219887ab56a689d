"""
Test Trainer
============
Verify AdamW, the learning-rate schedule, the loss variants and the
training loop on tiny models.
"""

import csv
import math

import numpy as np
import pytest

import dataset
import metrics
from conftest import slow, tiny_config
from models import TrainConfig, XiNetConfig
from trainer import (OptState, adamw_step, compute_loss, lr_at, train, write_history_csv, _stack)
from xinet import autodiff as ad
from xinet.errors import ConfigError, NumericError, ShapeError
from xinet.network import build_model


def tiny_samples(count, seed=0):
    """Records of 64 points at 16 Hz (4 s), one gap of 8-16 samples each."""
    rng = np.random.default_rng(seed)
    return [dataset.cut_gap(dataset.generate_waveform(seed + i, 64, 16.0), rng) for i in range(count)]


def scalar_param(value):
    return ad.Tensor(np.array([value]), requires_grad=True)


# =========================================
# OPTIMIZER
# =========================================
def test_zero_gradient_without_decay_changes_nothing():
    params = {'w': scalar_param(0.7), 'b': ad.Tensor(np.arange(4.0), requires_grad=True)}
    params['w'].grad = np.zeros(1)
    before = {n: p.data.copy() for n, p in params.items()}
    state = OptState()
    for _ in range(25):
        adamw_step(params, state, lr=1e-2, weight_decay=0.0)
    for name, p in params.items():
        np.testing.assert_array_equal(p.data, before[name])
    assert state.step == 25
    print("✓ zero gradient + zero decay leaves parameters bit-unchanged")


@pytest.mark.parametrize('wd', [0.0, 0.1])
def test_first_step_closed_form(wd):
    lr, g, w0 = 1e-2, -0.3, 1.5
    p = scalar_param(w0)
    p.grad = np.array([g])
    adamw_step({'w': p}, OptState(), lr=lr, weight_decay=wd)
    expected = w0 * (1 - lr * wd) - lr * g / (abs(g) + 1e-8)
    assert p.data[0] == pytest.approx(expected, rel=1e-12)
    print(f"✓ t=1 update matches the closed form (wd={wd})")


def test_quadratic_bowl_converges():
    """f(w) = w^2 from w = 1: 500 AdamW steps land within 1e-3 of the minimum."""
    p = scalar_param(1.0)
    state = OptState()
    for _ in range(500):
        p.grad = 2.0 * p.data
        adamw_step({'w': p}, state, lr=0.05, weight_decay=0.0)
    assert abs(p.data[0]) < 1e-3
    print(f"✓ |w| = {abs(p.data[0]):.2e} after 500 steps")


def test_gradient_shape_mismatch():
    p = scalar_param(1.0)
    p.grad = np.zeros(2)
    with pytest.raises(ShapeError):
        adamw_step({'w': p}, OptState(), lr=1e-3, weight_decay=0.0)
    print("✓ misshapen gradients rejected")


# =========================================
# LEARNING RATE SCHEDULE
# =========================================
def test_lr_schedule_examples():
    assert lr_at(0, 80, 1e-3) == 1e-3
    assert lr_at(39, 80, 1e-3) == 1e-3
    assert lr_at(40, 80, 1e-3) == pytest.approx(1e-3)
    assert lr_at(79, 80, 1e-3) == pytest.approx(1e-5, rel=1e-9)
    with pytest.raises(ConfigError):
        lr_at(80, 80, 1e-3)
    with pytest.raises(ConfigError):
        lr_at(-1, 80, 1e-3)
    print("✓ 1e-3 for the first half, cosine down to 1e-5 at the last epoch")


def test_lr_schedule_is_monotone():
    rates = [lr_at(e, 80, 1e-3) for e in range(80)]
    assert all(b <= a + 1e-18 for a, b in zip(rates, rates[1:]))
    step = [lr_at(e, 80, 1e-3, 'constant_then_step') for e in range(80)]
    assert step[39] == 1e-3 and step[40] == pytest.approx(1e-4) and step[79] == pytest.approx(1e-5)
    assert lr_at(79, 80, 1e-3, 'constant') == 1e-3
    print("✓ cosine is non-increasing; step and constant schedules")


# =========================================
# LOSS
# =========================================
def test_gap_weighted_loss(rng):
    model = build_model(tiny_config())
    samples = tiny_samples(2)
    inputs, targets, mask = _stack(samples, model.dtype)
    plain = compute_loss(model, inputs, targets, mask, TrainConfig()).item()
    unit = compute_loss(model, inputs, targets, mask,
                        TrainConfig(loss_scope='gap_weighted', gap_loss_lambda=1.0)).item()
    assert unit == plain

    gap_only = compute_loss(model, inputs, targets, mask,
                            TrainConfig(loss_scope='gap_weighted', gap_loss_lambda=0.0)).item()
    with ad.no_grad():
        output = model(ad.Tensor(inputs)).data
    expected = float(np.sum(((output - targets) ** 2)[mask])) / output.size
    assert gap_only == pytest.approx(expected, rel=1e-12)
    print("✓ lambda=1 is plain MSE; lambda=0 keeps only the gap")


# =========================================
# TRAINING LOOP
# =========================================
def test_training_is_deterministic():
    samples = tiny_samples(4)
    cfg = TrainConfig(epochs=2, batch_size=4, seed=3)
    first = train(build_model(tiny_config()), samples, cfg)
    second = train(build_model(tiny_config()), samples, cfg)
    assert [r.train_loss for r in first.history] == [r.train_loss for r in second.history]
    for name, array in first.checkpoint.params.items():
        np.testing.assert_array_equal(array, second.checkpoint.params[name])
    print("✓ same seed, identical loss history and weights")


def test_lr_trace_and_history():
    cfg = TrainConfig(epochs=4, batch_size=4, base_lr=2e-3)
    result = train(build_model(tiny_config()), tiny_samples(3), cfg, val_samples=tiny_samples(2, seed=50))
    assert [r.epoch for r in result.history] == [0, 1, 2, 3]
    assert [r.lr for r in result.history] == [lr_at(e, 4, 2e-3) for e in range(4)]
    assert all(r.val_gap_mae is not None and r.val_gap_mae >= 0 for r in result.history)
    assert result.checkpoint.epoch == 4
    assert result.opt_state.step == 4 * math.ceil(6 / 4)
    print("✓ recorded learning rates follow lr_at; optimizer steps counted")


def test_loss_trends_down():
    cfg = TrainConfig(epochs=5, batch_size=4, seed=1)
    history = train(build_model(tiny_config()), tiny_samples(8), cfg).history
    deltas = np.diff([r.train_loss for r in history])
    assert np.median(deltas) < 0
    print(f"✓ loss {history[0].train_loss:.4f} -> {history[-1].train_loss:.4f}")


def test_nan_loss_aborts_with_diagnostics():
    model = build_model(tiny_config())
    model.parameters()[0].data[:] = np.nan
    with pytest.raises(NumericError) as info:
        train(model, tiny_samples(2), TrainConfig(epochs=1))
    message = str(info.value)
    assert 'epoch 0' in message and 'batch 0' in message and 'parameter norm' in message
    assert len(ad.get_tape()) == 0
    print("✓ NaN loss raises NumericError naming epoch, batch and norm")


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        train(build_model(tiny_config()), [], TrainConfig(epochs=1))
    print("✓ empty training set rejected")


def test_history_csv(tmp_path):
    result = train(build_model(tiny_config()), tiny_samples(2), TrainConfig(epochs=2, mirror_augment=False))
    path = tmp_path / 'history.csv'
    write_history_csv(path, result.history)
    with open(path, newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['epoch', 'lr', 'train_loss', 'val_gap_mae']
    assert len(rows) == 3
    assert float(rows[1][2]) == result.history[0].train_loss
    assert rows[1][3] == ''
    print("✓ history CSV with an empty validation column")


@slow
def test_overfits_single_sample():
    """One sample, 300 epochs: final MSE below 1% of the first epoch's."""
    cfg = TrainConfig(epochs=300, batch_size=1, mirror_augment=False)
    history = train(build_model(tiny_config()), tiny_samples(1), cfg).history
    assert history[-1].train_loss < 0.01 * history[0].train_loss
    print(f"✓ loss {history[0].train_loss:.4e} -> {history[-1].train_loss:.4e}")


def gap_mse(samples, reconstructions):
    errors = [(recon - s.target.samples)[s.gap.start_index:s.gap.end_index]
              for s, recon in zip(samples, reconstructions)]
    return float(np.mean(np.concatenate(errors) ** 2))


@slow
def test_overfits_eight_samples():
    """Eight records at L=256, 300 epochs: gap MSE below 10% of zero fill on the same records."""
    samples = dataset.build_dataset(8, 256, 64.0, seed=0)
    model = build_model(tiny_config(input_length=256))
    train(model, samples, TrainConfig(epochs=300, batch_size=2))
    ours = gap_mse(samples, metrics.ModelReconstructor(model)(samples))
    unfilled = gap_mse(samples, metrics.zero_fill(samples))
    assert ours < 0.1 * unfilled
    print(f"✓ gap MSE {ours:.4e} vs zero fill {unfilled:.4e}")


@pytest.fixture(scope='module')
def desk_split():
    samples = dataset.build_dataset(2000, 1024, 64.0, seed=0, workers=4)
    train_idx, val_idx = dataset.split_indices(len(samples), seed=0)
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


@slow
@pytest.mark.parametrize('seed', [0, 1, 2])
def test_model_beats_unfilled_reference(seed, desk_split):
    """Desk scale: 2000 records, 80 epochs, L=1024; gap MAE and RMSE below zero fill."""
    train_samples, val_samples = desk_split
    model = build_model(XiNetConfig(variant='full', seed=seed))
    train(model, train_samples, TrainConfig(seed=seed))
    evaluator = metrics.get_evaluator()
    reference = evaluator.evaluate(val_samples, 'zero_fill')
    ours = evaluator.evaluate(val_samples, metrics.ModelReconstructor(model))
    print(metrics.compare_table([reference, ours]))
    assert ours.mae_mean < reference.mae_mean
    assert ours.rmse_mean < reference.rmse_mean
    print(f"✓ seed {seed}: model beats the unfilled reference")


@slow
def test_frequency_ablation_report(desk_split):
    """full vs time_only on the same data: both train without NaN and the report is emitted."""
    train_samples, val_samples = desk_split
    evaluator = metrics.get_evaluator()
    reports = [evaluator.evaluate(val_samples, 'zero_fill')]
    for variant in ('full', 'time_only'):
        model = build_model(XiNetConfig(variant=variant))
        history = train(model, train_samples, TrainConfig()).history
        losses = [r.train_loss for r in history]
        assert all(math.isfinite(v) for v in losses)
        assert losses[-1] < losses[0]
        reports.append(evaluator.evaluate(val_samples, metrics.ModelReconstructor(model)))
    table = metrics.compare_table(reports)
    assert 'Xi-Net o/p' in table and 'Xi-Net time-only' in table
    print(table)


if __name__ == '__main__':
    pytest.main([__file__, '-v', '-s'])
