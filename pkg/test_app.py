"""
Test Application
================
End-to-end runs of the command line: gen -> train -> eval -> reconstruct -> plot,
plus the error reporting contract.
"""

import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import dataset
import metrics
from app import main

TINY_MODEL = {'patch': 4, 'embed_dim': 8, 'stage_depths': [2, 2], 'bottleneck_depth': 2,
              'window': 4, 'dtype': 'float64'}
TINY_TRAIN = {'epochs': 1, 'batch_size': 4}


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    """A 10-record dataset at L=256 / 64 Hz and a checkpoint trained on it for one epoch."""
    root = tmp_path_factory.mktemp('cli')
    data = root / 'data'
    assert main(['gen', '--count', '10', '--length', '256', '--sample-rate', '64', '--seed', '5',
                 '--out', str(data)]) == 0
    config = root / 'tiny.json'
    config.write_text(json.dumps({'model': TINY_MODEL, 'train': TINY_TRAIN}), encoding='utf-8')
    ckpt = root / 'model.ckpt'
    assert main(['train', '--data', str(data), '--config', str(config), '--out-ckpt', str(ckpt)]) == 0
    return {'root': root, 'data': data, 'config': config, 'ckpt': ckpt}


# =========================================
# GEN
# =========================================
def test_gen_split_and_files(workspace):
    manifest = dataset.load_manifest(workspace['data'] / 'manifest.json')
    assert len(manifest.files) == 10
    assert len(manifest.split['train']) == 8 and len(manifest.split['val']) == 2
    assert manifest.length == 256 and manifest.sample_rate_hz == 64.0
    for name in manifest.files:
        assert (workspace['data'] / name.replace('.txt', '.gapped.txt')).exists()
    print("✓ 10 records, 8 train / 2 val")


def test_gen_is_byte_identical(tmp_path):
    for name in ('a', 'b'):
        assert main(['gen', '--count', '3', '--length', '256', '--sample-rate', '64', '--seed', '9',
                     '--out', str(tmp_path / name)]) == 0
    names = sorted(os.listdir(tmp_path / 'a'))
    assert names == sorted(os.listdir(tmp_path / 'b'))
    for name in names:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    print("✓ same seed, byte-identical dataset")


def test_gen_warns_on_untileable_length(tmp_path, capsys):
    assert main(['gen', '--count', '2', '--length', '1000', '--sample-rate', '64',
                 '--out', str(tmp_path / 'odd')]) == 0
    err = capsys.readouterr().err
    assert 'warning:' in err
    print("✓ length 1000 generates with a warning")


# =========================================
# TRAIN
# =========================================
def test_train_writes_checkpoint_and_history(workspace):
    assert workspace['ckpt'].exists()
    history = workspace['root'] / 'model.history.csv'
    with open(history, newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['epoch', 'lr', 'train_loss', 'val_gap_mae']
    assert len(rows) == 2
    assert float(rows[1][3]) >= 0.0
    print("✓ checkpoint and one-epoch history written")


def test_train_rejects_length_mismatch(workspace, capsys):
    config = workspace['root'] / 'wrong.json'
    config.write_text(json.dumps({'model': dict(TINY_MODEL, input_length=128), 'train': TINY_TRAIN}),
                      encoding='utf-8')
    code = main(['train', '--data', str(workspace['data']), '--config', str(config),
                 '--out-ckpt', str(workspace['root'] / 'never.ckpt')])
    assert code == 2
    assert capsys.readouterr().err.startswith('error: config:')
    print("✓ config length must match the dataset")


# =========================================
# EVAL
# =========================================
def test_eval_baseline_report(workspace, capsys):
    report = workspace['root'] / 'zero.json'
    assert main(['eval', '--data', str(workspace['data']), '--baseline', 'zero_fill',
                 '--report', str(report)]) == 0
    out = capsys.readouterr().out
    assert 'Reference(Unfilled)' in out and 'lower is better' in out
    payload = json.loads(report.read_text(encoding='utf-8'))
    assert payload['reconstructor'] == 'zero_fill'
    assert len(payload['samples']) == 2
    assert (workspace['root'] / 'zero.txt').read_text(encoding='utf-8') == out
    print("✓ baseline report as JSON and text table")


def test_eval_compare_checkpoint(workspace, capsys):
    report = workspace['root'] / 'compare.json'
    assert main(['eval', '--data', str(workspace['data']), '--ckpt', str(workspace['ckpt']),
                 '--compare', '--report', str(report)]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.index('Reference(Unfilled)') < header.index('Xi-Net o/p')
    payload = json.loads(report.read_text(encoding='utf-8'))
    assert [r['reconstructor'] for r in payload] == ['zero_fill', 'full']
    for r in payload:
        assert all(np.isfinite(r[k]) and r[k] >= 0 for k in ('dfd_mean', 'mrd', 'mae_mean', 'rmse_mean'))
    print("✓ reference and model columns side by side")


# =========================================
# RECONSTRUCT AND PLOT
# =========================================
def test_reconstruct_keeps_observed_samples(workspace):
    manifest = dataset.load_manifest(workspace['data'] / 'manifest.json')
    errors = []
    for name in manifest.split['val']:
        gapped_path = workspace['data'] / name.replace('.txt', '.gapped.txt')
        out = workspace['root'] / ('recon_' + name)
        assert main(['reconstruct', '--ckpt', str(workspace['ckpt']), '--in', str(gapped_path),
                     '--out', str(out)]) == 0
        gapped, gap = dataset.load_waveform(gapped_path)
        recon, recon_gap = dataset.load_waveform(out)
        target, _ = dataset.load_waveform(workspace['data'] / name)
        assert recon_gap == gap
        outside = np.ones(recon.length, dtype=bool)
        outside[gap.start_index:gap.end_index] = False
        np.testing.assert_array_equal(recon.samples[outside], gapped.samples[outside])
        errors.append(metrics.mae(metrics.gap_segment(recon, gap), metrics.gap_segment(target, gap)))

    report = workspace['root'] / 'model.json'
    assert main(['eval', '--data', str(workspace['data']), '--ckpt', str(workspace['ckpt']),
                 '--report', str(report)]) == 0
    payload = json.loads(report.read_text(encoding='utf-8'))
    assert payload['mae_mean'] == pytest.approx(float(np.mean(errors)), rel=1e-9)
    print("✓ reconstruct splices the gap only and agrees with eval")


def test_reconstruct_with_explicit_gap(workspace):
    manifest = dataset.load_manifest(workspace['data'] / 'manifest.json')
    name = manifest.files[0]
    target, gap = dataset.load_waveform(workspace['data'] / name)
    bare = workspace['root'] / 'bare.txt'
    dataset.save_waveform(bare, target)
    out = workspace['root'] / 'bare.recon.txt'
    assert main(['reconstruct', '--ckpt', str(workspace['ckpt']), '--in', str(bare),
                 '--gap', f"{gap.start_index},{gap.length_samples}", '--out', str(out)]) == 0
    recon, _ = dataset.load_waveform(out)
    np.testing.assert_array_equal(recon.samples[:gap.start_index], target.samples[:gap.start_index])
    print("✓ --gap stands in for a missing gap header")


def test_plot_writes_svg_and_csv(workspace):
    data = workspace['data']
    name = dataset.load_manifest(data / 'manifest.json').files[0]
    recon = workspace['root'] / 'plot_recon.txt'
    assert main(['reconstruct', '--ckpt', str(workspace['ckpt']),
                 '--in', str(data / name.replace('.txt', '.gapped.txt')), '--out', str(recon)]) == 0
    svg = workspace['root'] / 'figure.svg'
    assert main(['plot', '--target', str(data / name), '--gapped',
                 str(data / name.replace('.txt', '.gapped.txt')), '--recon', str(recon),
                 '--out', str(svg)]) == 0
    root = ET.parse(svg).getroot()
    assert root.tag.endswith('svg')
    with open(workspace['root'] / 'figure.csv', newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['index', 'time_s', 'original', 'gapped', 'reconstructed']
    assert len(rows) == 257
    print("✓ SVG parses; trace CSV has one row per sample")


# =========================================
# ERRORS
# =========================================
def test_missing_dataset_exit_code(tmp_path, capsys):
    code = main(['eval', '--data', str(tmp_path / 'nowhere'), '--baseline', 'zero_fill'])
    err = capsys.readouterr().err
    assert code == 3
    assert err.startswith('error: not_found:') and err.count('\n') == 1
    print("✓ missing data exits 3 with a one-line message")


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(['gen', '--count', '1', '--bogus']) == 2
    err = capsys.readouterr().err
    assert err.startswith('error: usage:') and '--bogus' in err
    assert err.count('\n') == 1
    assert main([]) == 2
    assert capsys.readouterr().err.startswith('error: usage:')
    print("✓ argparse mistakes exit 2 with a one-line message")


def test_eval_without_target_exit_code(workspace, capsys):
    assert main(['eval', '--data', str(workspace['data'])]) == 2
    assert capsys.readouterr().err.startswith('error: config:')
    print("✓ eval without --ckpt or --baseline exits 2")


def test_corrupt_checkpoint_exit_code(workspace, capsys):
    bad = workspace['root'] / 'bad.ckpt'
    bad.write_bytes(b'garbage')
    code = main(['eval', '--data', str(workspace['data']), '--ckpt', str(bad)])
    assert code == 3
    assert capsys.readouterr().err.startswith('error: checkpoint:')
    print("✓ corrupt checkpoint exits 3")


def test_missing_gap_is_a_data_error(workspace, capsys):
    name = dataset.load_manifest(workspace['data'] / 'manifest.json').files[0]
    target, _ = dataset.load_waveform(workspace['data'] / name)
    bare = workspace['root'] / 'nogap.txt'
    dataset.save_waveform(bare, target)
    code = main(['reconstruct', '--ckpt', str(workspace['ckpt']), '--in', str(bare),
                 '--out', str(workspace['root'] / 'nogap.out.txt')])
    assert code == 3
    assert capsys.readouterr().err.startswith('error: data:')
    print("✓ no gap header and no --gap exits 3")


if __name__ == '__main__':
    pytest.main([__file__, '-v', '-s'])
