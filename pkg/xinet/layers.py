"""
Layers
======
Parameter containers for the network: a small Module base class that
collects named parameters, plus Linear, LayerNorm and the block MLP.

Initialization follows the Swin convention:
- projections: truncated normal, std 0.02 (cut at two standard deviations)
- biases: zeros
- layer norm: gamma ones, beta zeros
"""

import numpy as np
from scipy.stats import truncnorm

from xinet import autodiff as ad
from xinet.errors import ShapeError

INIT_STD = 0.02


def trunc_normal(rng, shape, std=INIT_STD, dtype=np.float64):
    """Drawing truncated-normal values in [-2 std, 2 std]."""
    values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=dtype).reshape(shape)


class Module:
    """
    Base class for anything that owns parameters.

    Parameters are Tensor attributes with requires_grad=True; submodules are
    Module attributes or lists of Modules. Names are dotted attribute paths,
    which makes them unique by construction.
    """

    def named_parameters(self, prefix=''):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, ad.Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + '.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    """y = x @ weight + bias, weight stored as [in_dim, out_dim]."""

    def __init__(self, in_dim, out_dim, rng, bias=True, dtype=np.float64):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = ad.Tensor(trunc_normal(rng, (in_dim, out_dim), dtype=dtype), requires_grad=True)
        self.bias = ad.Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"Linear({self.in_dim}->{self.out_dim}): input shape {x.shape}")
        return ad.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    """Layer norm over the last axis with learned scale and shift."""

    def __init__(self, dim, eps=1e-5, dtype=np.float64):
        self.dim = dim
        self.eps = eps
        self.gamma = ad.Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = ad.Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


class Mlp(Module):
    """Two-layer feed-forward block with GELU, hidden width = ratio * dim."""

    def __init__(self, dim, rng, ratio=4, dtype=np.float64):
        self.fc1 = Linear(dim, dim * ratio, rng, dtype=dtype)
        self.fc2 = Linear(dim * ratio, dim, rng, dtype=dtype)

    def __call__(self, x):
        return self.fc2(ad.gelu(self.fc1(x)))
