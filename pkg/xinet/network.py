"""
Xi-Net Network
==============
Three pillars, like the letter Xi:
- time encoder: patch partition (P raw values per token) -> Swin stages with merging -> bottleneck
- frequency encoder: same structure on the DFT of the input stacked as real/imag (2P raw values per token)
- decoder: bottlenecks stacked on the feature axis, then Swin stages with patch
  expanding; at every resolution the skips of both encoders are stacked onto the
  decoder feature and projected back to the stage width

Variants:
- full: both encoders, decoder twice as wide as either encoder
- time_only: time encoder only, decoder as wide as the encoder
- single_encoder: time + real + imag stacked into one 3-channel encoder
"""

import logging

import numpy as np

import dsp
from xinet import autodiff as ad
from xinet.errors import ConfigError, ShapeError
from xinet.layers import LayerNorm, Linear, Module
from xinet.swin1d import FinalPatchExpand, PatchEmbed, PatchExpand, PatchMerge, SwinStage

logger = logging.getLogger(__name__)


class Encoder(Module):
    """Patch embedding, Swin stages each followed by patch merging, then a bottleneck stage."""

    def __init__(self, config, in_channels, rng, dtype):
        self.embed = PatchEmbed(config.patch, in_channels, config.embed_dim, rng, dtype=dtype)
        self.stages = []
        self.merges = []
        dim = config.embed_dim
        tokens = config.num_tokens
        for i, depth in enumerate(config.stage_depths):
            heads = config.heads[i] if config.heads else None
            self.stages.append(SwinStage(dim, depth, tokens, config.window, rng, heads=heads, dtype=dtype))
            self.merges.append(PatchMerge(dim, rng, dtype=dtype))
            dim *= 2
            tokens //= 2
        self.bottleneck = SwinStage(dim, config.bottleneck_depth, tokens, config.window, rng, dtype=dtype)
        self.out_dim = dim

    def __call__(self, x):
        tokens = self.embed(x)
        skips = []
        for stage, merge in zip(self.stages, self.merges):
            tokens = stage(tokens)
            skips.append(tokens)
            tokens = merge(tokens)
        return self.bottleneck(tokens), skips


class Decoder(Module):
    """
    Patch expanding + skip fusion + Swin stages, finishing with the final expansion.

    Parameters:
    - width: decoder width relative to one encoder (2 when two encoders are stacked)
    - skip_sources: number of encoders feeding skips
    """

    def __init__(self, config, width, skip_sources, rng, dtype):
        num_stages = config.num_stages
        dim = width * config.embed_dim * 2 ** num_stages
        tokens = config.num_tokens // 2 ** num_stages
        self.expands = []
        self.skip_projs = []
        self.stages = []
        for i in reversed(range(num_stages)):
            self.expands.append(PatchExpand(dim, rng, dtype=dtype))
            dim //= 2
            tokens *= 2
            encoder_dim = config.embed_dim * 2 ** i
            self.skip_projs.append(Linear(dim + skip_sources * encoder_dim, dim, rng, dtype=dtype))
            heads = config.heads[i] * width if config.heads else None
            self.stages.append(SwinStage(dim, config.stage_depths[i], tokens, config.window, rng,
                                         heads=heads, dtype=dtype))
        self.norm = LayerNorm(dim, dtype=dtype)
        self.final = FinalPatchExpand(dim, config.patch, rng, dtype=dtype)

    def __call__(self, tokens, skip_lists):
        num_stages = len(self.stages)
        for j in range(num_stages):
            i = num_stages - 1 - j
            tokens = self.expands[j](tokens)
            tokens = self.skip_projs[j](ad.concat([tokens] + [skips[i] for skips in skip_lists], axis=-1))
            tokens = self.stages[j](tokens)
        return self.final(self.norm(tokens))


class XiNetModel(Module):
    """
    The reconstruction network.

    Input and output are Tensors [B, L, 1]; the input is the preprocessed,
    zero-filled (gapped) waveform.
    """

    def __init__(self, config):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(config.seed)

        if config.variant == 'full':
            self.time_encoder = Encoder(config, 1, rng, self.dtype)
            self.freq_encoder = Encoder(config, 2, rng, self.dtype)
            fused_dim = 2 * self.time_encoder.out_dim
            self.fusion = Linear(fused_dim, fused_dim, rng, dtype=self.dtype)
            self.decoder = Decoder(config, 2, 2, rng, self.dtype)
        elif config.variant == 'time_only':
            self.time_encoder = Encoder(config, 1, rng, self.dtype)
            self.decoder = Decoder(config, 1, 1, rng, self.dtype)
        else:
            self.encoder = Encoder(config, 3, rng, self.dtype)
            self.decoder = Decoder(config, 1, 1, rng, self.dtype)

        logger.debug("built %s Xi-Net with %d parameters", config.variant, count_parameters(self))

    def _check_input(self, x):
        expected = self.config.input_length
        if x.ndim != 3 or x.shape[1] != expected or x.shape[2] != 1:
            raise ShapeError(f"model expects input [B, {expected}, 1], got {x.shape}")
        if x.dtype != self.dtype and not x.requires_grad:
            x = ad.Tensor(x.data.astype(self.dtype))
        return x

    def _spectrum(self, x):
        return dsp.spectral_tokens(x, self.config.spectrum_scale)

    def _require_variant(self, variant):
        if self.config.variant != variant:
            raise ConfigError(f"variant mismatch: model is '{self.config.variant}', "
                              f"called as '{variant}'")

    def forward(self, x):
        if self.config.variant == 'full':
            return self.forward_full(x)
        if self.config.variant == 'time_only':
            return self.forward_time_only(x)
        return self.forward_single_encoder(x)

    __call__ = forward

    def forward_full(self, x):
        self._require_variant('full')
        x = self._check_input(x)
        time_tokens, time_skips = self.time_encoder(x)
        freq_tokens, freq_skips = self.freq_encoder(self._spectrum(x))
        fused = self.fusion(ad.concat([time_tokens, freq_tokens], axis=-1))
        return self.decoder(fused, [time_skips, freq_skips])

    def forward_time_only(self, x):
        self._require_variant('time_only')
        x = self._check_input(x)
        tokens, skips = self.time_encoder(x)
        return self.decoder(tokens, [skips])

    def forward_single_encoder(self, x):
        self._require_variant('single_encoder')
        x = self._check_input(x)
        stacked = ad.concat([x, self._spectrum(x)], axis=-1)
        tokens, skips = self.encoder(stacked)
        return self.decoder(tokens, [skips])


def build_model(config):
    """Creating a freshly initialized model for a config."""
    return XiNetModel(config)


def count_parameters(model):
    return int(sum(p.size for p in model.parameters()))


def stage_dims(model):
    """
    Feature widths per resolution.

    Returns:
    - dict with 'encoder' and 'decoder' lists indexed by stage (finest first)
    """
    encoder = getattr(model, 'time_encoder', None) or model.encoder
    decoder_dims = [stage.dim for stage in reversed(model.decoder.stages)]
    return {
        'encoder': [stage.dim for stage in encoder.stages],
        'decoder': decoder_dims,
    }


def predict(model, inputs, batch_size=8):
    """
    Running inference on gapped waveforms.

    Parameters:
    - inputs: array [N, L]

    Returns:
    - array [N, L] of raw model outputs (float64)
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    outputs = []
    with ad.no_grad():
        for start in range(0, inputs.shape[0], batch_size):
            batch = inputs[start:start + batch_size, :, None].astype(model.dtype)
            outputs.append(model(ad.Tensor(batch)).data[..., 0].astype(np.float64))
    return np.concatenate(outputs, axis=0) if outputs else np.zeros((0, model.config.input_length))
