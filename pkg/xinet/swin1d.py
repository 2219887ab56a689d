"""
1D Shifted-Window Transformer
=============================
Swin building blocks reduced to a single time axis:
- patch partition / embedding of [B, L, C] signals into [B, L/P, D] tokens
- window partition and reverse along the token axis
- cyclic shift with a segment mask for the wrapped window
- windowed multi-head self-attention with a 1D relative position bias
- Swin block (norm -> (S)W-MSA -> residual -> norm -> MLP -> residual)
- patch merging (N, D) -> (N/2, 2D) and patch expanding (N, D) -> (2N, D/2)
- final expansion of tokens back to a waveform channel

Token sequences are Tensors shaped [B, N, D].
"""

import numpy as np

from xinet import autodiff as ad
from xinet.errors import ShapeError
from xinet.layers import LayerNorm, Linear, Mlp, Module

# Large negative logit used instead of -inf so softmax never sees inf - inf
MASK_VALUE = -1e9


def heads_for(dim, heads=None):
    """Head count for a stage: explicit value, else max(1, dim // 32) lowered to a divisor of dim."""
    if heads is not None:
        if heads < 1 or dim % heads:
            raise ShapeError(f"dim {dim} is not divisible by {heads} heads")
        return heads
    count = max(1, dim // 32)
    while dim % count:
        count -= 1
    return count


def effective_window(num_tokens, window, shift):
    """Stages with no more tokens than the window use one unshifted window."""
    if num_tokens <= window:
        return num_tokens, 0
    return window, shift


# =========================================
# PATCH EMBEDDING
# =========================================
def patch_partition(x, patch, proj):
    """
    Splitting a [B, L, C] signal into L/P patches of P*C raw values and
    projecting each to the embedding dimension.

    A frequency input (C=2) therefore carries twice the raw values per token
    of a time input (C=1).
    """
    if x.ndim != 3:
        raise ShapeError(f"patch_partition expects [B, L, C], got {x.shape}")
    batch, length, channels = x.shape
    if length % patch:
        raise ShapeError(f"patch_partition: length {length} is not divisible by patch {patch}")
    tokens = x.reshape(batch, length // patch, patch * channels)
    return proj(tokens)


class PatchEmbed(Module):
    """Patch partition followed by a linear projection P*C -> D."""

    def __init__(self, patch, in_channels, embed_dim, rng, dtype=np.float64):
        self.patch = patch
        self.in_channels = in_channels
        self.proj = Linear(patch * in_channels, embed_dim, rng, dtype=dtype)

    @property
    def raw_width(self):
        return self.patch * self.in_channels

    def __call__(self, x):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(f"PatchEmbed expects {self.in_channels} channels, got {x.shape}")
        return patch_partition(x, self.patch, self.proj)


# =========================================
# WINDOWS AND SHIFTS
# =========================================
def window_partition(tokens, window):
    """[B, N, D] -> [B * N/M, M, D]."""
    batch, count, dim = tokens.shape
    if count % window:
        raise ShapeError(f"window_partition: {count} tokens not divisible by window {window}")
    return tokens.reshape(batch * (count // window), window, dim)


def window_reverse(windows, num_tokens):
    """[B * N/M, M, D] -> [B, N, D]."""
    num_windows, window, dim = windows.shape
    if num_tokens % window or (num_windows * window) % num_tokens:
        raise ShapeError(f"window_reverse: {windows.shape} cannot form sequences of {num_tokens}")
    return windows.reshape(num_windows * window // num_tokens, num_tokens, dim)


def cyclic_shift(tokens, shift):
    """Token i moves to (i - shift) mod N; cyclic_shift(t, -s) undoes cyclic_shift(t, s)."""
    return ad.roll(tokens, -shift, axis=1)


def attention_mask(num_tokens, window, shift):
    """
    Additive mask [N/M, M, M] for attention after a cyclic shift.

    After shifting by s, the last window holds the tail of the sequence
    followed by its head. Positions are labelled by the segment they came from
    and pairs from different segments get MASK_VALUE.
    """
    if num_tokens % window:
        raise ShapeError(f"attention_mask: {num_tokens} tokens not divisible by window {window}")
    mask = np.zeros((num_tokens // window, window, window))
    if shift == 0:
        return mask
    segment = np.zeros(num_tokens, dtype=np.int64)
    segment[num_tokens - window:num_tokens - shift] = 1
    segment[num_tokens - shift:] = 2
    windows = segment.reshape(-1, window)
    crossing = windows[:, :, None] != windows[:, None, :]
    mask[crossing] = MASK_VALUE
    return mask


def relative_position_index(window):
    """index[i, j] = i - j + M - 1, addressing a bias table of length 2M - 1."""
    coords = np.arange(window)
    return coords[:, None] - coords[None, :] + window - 1


# =========================================
# WINDOW ATTENTION
# =========================================
class WindowAttention(Module):
    """
    Multi-head self-attention inside windows of M tokens.

    Per-head query/key/value/output projections come from splitting D-wide
    projections into `heads` slices. The bias table holds one value per
    relative offset in [-(M-1), M-1] per head.
    """

    def __init__(self, dim, heads, window, rng, dtype=np.float64):
        if dim % heads:
            raise ShapeError(f"WindowAttention: dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.window = window
        self.scale = (dim // heads) ** -0.5
        self.query = Linear(dim, dim, rng, dtype=dtype)
        self.key = Linear(dim, dim, rng, dtype=dtype)
        self.value = Linear(dim, dim, rng, dtype=dtype)
        self.proj = Linear(dim, dim, rng, dtype=dtype)
        self.bias_table = ad.Tensor(np.zeros((heads, 2 * window - 1), dtype=dtype), requires_grad=True)
        self.position_index = relative_position_index(window)
        self.last_weights = None

    def _split_heads(self, x):
        count, window, _ = x.shape
        return x.reshape(count, window, self.heads, self.dim // self.heads).transpose(0, 2, 1, 3)

    def __call__(self, windows, mask=None):
        count, window, dim = windows.shape
        if window != self.window or dim != self.dim:
            raise ShapeError(f"WindowAttention(M={self.window}, D={self.dim}): input {windows.shape}")
        q = self._split_heads(self.query(windows))
        k = self._split_heads(self.key(windows))
        v = self._split_heads(self.value(windows))

        scores = ad.matmul(q, k.transpose(0, 1, 3, 2)) * self.scale
        scores = scores + ad.take(self.bias_table, self.position_index, axis=1)
        if mask is not None:
            repeats = count // mask.shape[0]
            tiled = np.tile(mask[:, None, :, :], (repeats, 1, 1, 1)).astype(windows.dtype)
            scores = scores + ad.Tensor(tiled)

        weights = ad.softmax(scores, axis=-1)
        self.last_weights = weights.data
        out = ad.matmul(weights, v).transpose(0, 2, 1, 3).reshape(count, window, dim)
        return self.proj(out)


def window_msa(tokens, attn, shift=0):
    """
    (Shifted-)window attention over a [B, N, D] token sequence.

    The shift is applied before windowing and reversed afterwards; the mask
    keeps the wrapped window from mixing tokens of distant segments.
    """
    _, count, _ = tokens.shape
    window = attn.window
    x = cyclic_shift(tokens, shift) if shift else tokens
    mask = attention_mask(count, window, shift) if shift else None
    out = window_reverse(attn(window_partition(x, window), mask), count)
    return cyclic_shift(out, -shift) if shift else out


class SwinBlock(Module):
    """Pre-norm transformer block with windowed attention and an MLP, both residual."""

    def __init__(self, dim, heads, window, shift, rng, mlp_ratio=4, dtype=np.float64):
        if not 0 <= shift < window:
            raise ShapeError(f"SwinBlock: shift {shift} outside [0, {window})")
        self.dim = dim
        self.shift = shift
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.attn = WindowAttention(dim, heads, window, rng, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(dim, rng, ratio=mlp_ratio, dtype=dtype)

    def __call__(self, tokens):
        if tokens.ndim != 3 or tokens.shape[-1] != self.dim:
            raise ShapeError(f"SwinBlock(D={self.dim}): input {tokens.shape}")
        x = tokens + window_msa(self.norm1(tokens), self.attn, self.shift)
        return x + self.mlp(self.norm2(x))


class SwinStage(Module):
    """`depth` Swin blocks at a fixed (N, D); odd blocks use shifted windows."""

    def __init__(self, dim, depth, num_tokens, window, rng, heads=None, dtype=np.float64):
        self.dim = dim
        self.num_tokens = num_tokens
        self.window, _ = effective_window(num_tokens, window, 0)
        head_count = heads_for(dim, heads)
        self.blocks = []
        for i in range(depth):
            _, shift = effective_window(num_tokens, window, 0 if i % 2 == 0 else window // 2)
            self.blocks.append(SwinBlock(dim, head_count, self.window, shift, rng, dtype=dtype))

    def __call__(self, tokens):
        for block in self.blocks:
            tokens = block(tokens)
        return tokens


# =========================================
# MERGING AND EXPANDING
# =========================================
class PatchMerge(Module):
    """Concatenating token pairs (2i, 2i+1), layer norm, linear 2D -> 2D."""

    def __init__(self, dim, rng, dtype=np.float64):
        self.dim = dim
        self.norm = LayerNorm(2 * dim, dtype=dtype)
        self.reduction = Linear(2 * dim, 2 * dim, rng, bias=False, dtype=dtype)

    def __call__(self, tokens):
        batch, count, dim = tokens.shape
        if dim != self.dim:
            raise ShapeError(f"PatchMerge(D={self.dim}): input {tokens.shape}")
        if count % 2:
            raise ShapeError(f"PatchMerge: odd token count {count}")
        pairs = tokens.reshape(batch, count // 2, 2 * dim)
        return self.reduction(self.norm(pairs))


class PatchExpand(Module):
    """Linear D -> D, each token split into two consecutive tokens of D/2."""

    def __init__(self, dim, rng, dtype=np.float64):
        if dim % 2:
            raise ShapeError(f"PatchExpand: odd feature dim {dim}")
        self.dim = dim
        self.expand = Linear(dim, dim, rng, bias=False, dtype=dtype)

    def __call__(self, tokens):
        batch, count, dim = tokens.shape
        if dim != self.dim:
            raise ShapeError(f"PatchExpand(D={self.dim}): input {tokens.shape}")
        return self.expand(tokens).reshape(batch, 2 * count, dim // 2)


class FinalPatchExpand(Module):
    """Linear D -> P per token, unfolded to a [B, N*P, 1] waveform channel."""

    def __init__(self, dim, patch, rng, dtype=np.float64):
        self.dim = dim
        self.patch = patch
        self.proj = Linear(dim, patch, rng, dtype=dtype)

    def __call__(self, tokens):
        batch, count, _ = tokens.shape
        return self.proj(tokens).reshape(batch, count * self.patch, 1)
