"""
Test Swin 1D
============
Verify windowing, shifting, masking, attention and the merge / expand
layers of the 1D shifted-window transformer.
"""

import numpy as np
import pytest

from xinet import autodiff as ad
from xinet import swin1d
from xinet.errors import ShapeError


def tokens(rng, *shape, grad=False):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=grad)


def weighted_sum(out, seed=5):
    weights = np.random.default_rng(seed).uniform(-1, 1, size=out.shape)
    return (out * ad.Tensor(weights)).sum()


# =========================================
# PATCHES
# =========================================
def test_patch_partition_counts(rng):
    time_embed = swin1d.PatchEmbed(4, 1, 6, rng)
    freq_embed = swin1d.PatchEmbed(4, 2, 6, rng)
    assert time_embed(tokens(rng, 1, 8, 1)).shape == (1, 2, 6)
    assert freq_embed(tokens(rng, 1, 8, 2)).shape == (1, 2, 6)
    assert (time_embed.raw_width, freq_embed.raw_width) == (4, 8)
    with pytest.raises(ShapeError):
        time_embed(tokens(rng, 1, 10, 1))
    print("✓ frequency tokens carry twice the raw values of time tokens")


def test_zero_input_gives_projection_bias(rng):
    embed = swin1d.PatchEmbed(4, 1, 5, rng)
    embed.proj.bias.data = rng.standard_normal(5)
    out = embed(ad.Tensor(np.zeros((2, 12, 1))))
    np.testing.assert_array_equal(out.data, np.broadcast_to(embed.proj.bias.data, (2, 3, 5)))
    print("✓ zero patches map to the projection bias")


# =========================================
# WINDOWS AND SHIFTS
# =========================================
def test_window_partition_round_trip(rng):
    t = tokens(rng, 3, 8, 5)
    windows = swin1d.window_partition(t, 4)
    assert windows.shape == (6, 4, 5)
    np.testing.assert_array_equal(swin1d.window_reverse(windows, 8).data, t.data)
    single = swin1d.window_partition(t, 8)
    np.testing.assert_array_equal(single.data, t.data)
    with pytest.raises(ShapeError):
        swin1d.window_partition(t, 3)
    print("✓ window partition / reverse are exact inverses")


def test_cyclic_shift():
    t = ad.Tensor(np.arange(4.0).reshape(1, 4, 1))
    np.testing.assert_array_equal(swin1d.cyclic_shift(t, 0).data, t.data)
    np.testing.assert_array_equal(swin1d.cyclic_shift(t, 1).data[0, :, 0], [1, 2, 3, 0])
    print("✓ [a,b,c,d] shifted by 1 is [b,c,d,a]")


def test_shift_unshift_identity(rng):
    t = tokens(rng, 2, 16, 3)
    for s in range(4):
        back = swin1d.cyclic_shift(swin1d.cyclic_shift(t, s), -s)
        np.testing.assert_array_equal(back.data, t.data)
    print("✓ shift(-s) undoes shift(s)")


def test_attention_mask_layout():
    assert not swin1d.attention_mask(8, 4, 0).any()
    mask = swin1d.attention_mask(8, 4, 2)
    assert mask.shape == (2, 4, 4)
    assert not mask[0].any()
    last = mask[1]
    assert not last[:2, :2].any() and not last[2:, 2:].any()
    assert np.all(last[:2, 2:] == swin1d.MASK_VALUE)
    assert np.all(last[2:, :2] == swin1d.MASK_VALUE)
    print("✓ cross-segment blocks of the wrapped window are masked")


def test_masked_pairs_get_no_attention(rng):
    dim, window, count = 8, 4, 16
    attn = swin1d.WindowAttention(dim, 2, window, rng)
    for linear in (attn.query, attn.key):
        linear.weight.data = rng.standard_normal(linear.weight.shape)
    swin1d.window_msa(tokens(rng, 2, count, dim), attn, shift=2)
    mask = swin1d.attention_mask(count, window, 2)
    tiled = np.tile(mask[:, None], (2, 2, 1, 1)) < 0
    assert attn.last_weights[tiled].max() < 1e-6
    print("✓ attention weight across masked pairs below 1e-6")


def test_relative_position_index():
    index = swin1d.relative_position_index(3)
    np.testing.assert_array_equal(index, [[2, 1, 0], [3, 2, 1], [4, 3, 2]])
    print("✓ bias table indexed by i - j + M - 1")


# =========================================
# ATTENTION AND BLOCKS
# =========================================
def test_single_token_window(rng):
    attn = swin1d.WindowAttention(6, 2, 1, rng)
    x = tokens(rng, 3, 1, 6)
    expected = attn.proj(attn.value(x)).data
    np.testing.assert_allclose(attn(x).data, expected, atol=1e-12)
    print("✓ M=1 attention reduces to out_proj(value_proj(x))")


def test_batch_equivariance(rng):
    attn = swin1d.WindowAttention(8, 2, 4, rng)
    x = tokens(rng, 3, 8, 8)
    out = swin1d.window_msa(x, attn, shift=2).data
    order = [2, 0, 1]
    permuted = swin1d.window_msa(ad.Tensor(x.data[order]), attn, shift=2).data
    np.testing.assert_allclose(permuted, out[order], rtol=0, atol=1e-12)
    print("✓ permuting the batch permutes the outputs")


def test_translation_by_one_window(rng):
    attn = swin1d.WindowAttention(8, 2, 4, rng)
    x = tokens(rng, 1, 16, 8)
    out = swin1d.window_msa(x, attn).data
    shifted = swin1d.window_msa(ad.Tensor(np.roll(x.data, 4, axis=1)), attn).data
    np.testing.assert_allclose(shifted, np.roll(out, 4, axis=1), atol=1e-12)
    print("✓ unshifted windows commute with whole-window translation")


def test_attention_gradients(rng):
    attn = swin1d.WindowAttention(8, 2, 4, rng)
    attn.bias_table.data = rng.standard_normal(attn.bias_table.shape) * 0.1
    x = tokens(rng, 1, 8, 8, grad=True)
    params = [x] + attn.parameters()
    error = ad.gradient_check(lambda: weighted_sum(swin1d.window_msa(x, attn, shift=2)), params)
    assert error < 1e-5
    print(f"✓ window attention gradients (rel err {error:.1e})")


def test_swin_block_shape_and_identity(rng):
    block = swin1d.SwinBlock(8, 2, 4, 2, rng)
    x = tokens(rng, 2, 16, 8)
    assert block(x).shape == x.shape
    for linear in (block.attn.proj, block.mlp.fc2):
        linear.weight.data[:] = 0.0
        linear.bias.data[:] = 0.0
    np.testing.assert_array_equal(block(x).data, x.data)
    print("✓ block preserves shape; zeroed output projections make it the identity")


def test_swin_stage_gradients(rng):
    stage = swin1d.SwinStage(8, 2, 8, 4, rng)
    assert [b.shift for b in stage.blocks] == [0, 2]
    x = tokens(rng, 1, 8, 8, grad=True)
    params = [x] + stage.parameters()
    error = ad.gradient_check(lambda: weighted_sum(stage(x)), params, max_entries=300)
    assert error < 1e-5
    print(f"✓ stage gradients (rel err {error:.1e})")


def test_small_stage_uses_one_unshifted_window(rng):
    stage = swin1d.SwinStage(16, 2, 4, 8, rng)
    assert stage.window == 4
    assert [b.shift for b in stage.blocks] == [0, 0]
    assert stage(tokens(rng, 1, 4, 16)).shape == (1, 4, 16)
    print("✓ N <= M stages clamp the window and drop the shift")


def test_heads_for():
    assert swin1d.heads_for(8) == 1
    assert swin1d.heads_for(64) == 2
    assert swin1d.heads_for(96) == 3
    assert swin1d.heads_for(8, 2) == 2
    with pytest.raises(ShapeError):
        swin1d.heads_for(8, 3)
    print("✓ head count rule")


# =========================================
# MERGE AND EXPAND
# =========================================
def test_merge_expand_shapes(rng):
    merge = swin1d.PatchMerge(3, rng)
    expand = swin1d.PatchExpand(6, rng)
    t = tokens(rng, 2, 4, 3)
    merged = merge(t)
    assert merged.shape == (2, 2, 6)
    assert expand(merged).shape == t.shape
    with pytest.raises(ShapeError):
        merge(tokens(rng, 2, 5, 3))
    with pytest.raises(ShapeError):
        swin1d.PatchExpand(5, rng)
    print("✓ (N, D) -> (N/2, 2D) -> (N, D)")


def test_merge_with_identity_projection(rng):
    merge = swin1d.PatchMerge(3, rng)
    merge.reduction.weight.data = np.eye(6)
    t = tokens(rng, 1, 4, 3)
    pairs = t.data.reshape(1, 2, 6)
    mu = pairs.mean(axis=-1, keepdims=True)
    expected = (pairs - mu) / np.sqrt(pairs.var(axis=-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(merge(t).data, expected, atol=1e-12)
    print("✓ identity projection leaves layer-normed concatenated pairs")


@pytest.mark.parametrize('layer', ['merge', 'expand', 'final'])
def test_resolution_layer_gradients(layer, rng):
    if layer == 'merge':
        module, x = swin1d.PatchMerge(4, rng), tokens(rng, 2, 4, 4, grad=True)
    elif layer == 'expand':
        module, x = swin1d.PatchExpand(6, rng), tokens(rng, 2, 3, 6, grad=True)
    else:
        module, x = swin1d.FinalPatchExpand(8, 4, rng), tokens(rng, 1, 2, 8, grad=True)
    error = ad.gradient_check(lambda: weighted_sum(module(x)), [x] + module.parameters())
    assert error < 1e-5
    print(f"✓ {layer} gradients (rel err {error:.1e})")


def test_final_patch_expand(rng):
    final = swin1d.FinalPatchExpand(8, 4, rng)
    assert final(tokens(rng, 1, 2, 8)).shape == (1, 8, 1)
    final.proj.weight.data[:] = 0.0
    np.testing.assert_array_equal(final(tokens(rng, 1, 2, 8)).data, 0.0)
    print("✓ final expansion to a waveform channel")


if __name__ == '__main__':
    pytest.main([__file__, '-v', '-s'])
