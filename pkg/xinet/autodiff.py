"""
Tensor Autodiff
===============
Dense tensors over numpy arrays with reverse-mode automatic differentiation.

How it works:
1. Every differentiable op computes its output with numpy and, when any input
   requires a gradient, appends a record (inputs, output, backward rule) to the
   global Tape.
2. backward(loss) walks the tape in reverse, pushing dLoss/dOutput through each
   backward rule until it reaches the leaves.
3. Leaves accumulate into .grad, so repeated backward calls add up until the
   caller resets them.

The tape belongs to one training thread. Tensors themselves are plain values
and can be read from several threads.
"""

import itertools
import logging
import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from config import settings
from xinet.errors import NumericError, ShapeError

logger = logging.getLogger(__name__)

_node_ids = itertools.count()


# =========================================
# TAPE
# =========================================
class TapeRecord:
    """One executed op: its inputs, its output and how to push gradients back."""

    __slots__ = ('name', 'inputs', 'output', 'backward_fn')

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """
    Ordered record of executed ops.

    Records are appended in execution order, so every input of record k was
    produced by an earlier record or is a leaf.
    """

    def __init__(self):
        self.records = []
        self.enabled = True

    def record(self, name, inputs, output, backward_fn):
        self.records.append(TapeRecord(name, inputs, output, backward_fn))

    def truncate(self, length):
        """Dropping every record after the first `length` ones."""
        del self.records[length:]

    def reset(self):
        self.records.clear()

    def __len__(self):
        return len(self.records)


# Global tape instance
_tape = Tape()

def get_tape():
    """Retrieving the tape of the current training thread."""
    return _tape


@contextmanager
def no_grad():
    """Running ops without recording them (inference, finite differences)."""
    previous = _tape.enabled
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = previous


# =========================================
# TENSOR
# =========================================
class Tensor:
    """
    Dense real tensor participating in reverse-mode differentiation.

    Parameters:
    - data: array-like; integer input is promoted to float64
    - requires_grad: whether backward() should populate .grad
    - dtype: optional numpy dtype (float32 or float64)
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        array = np.array(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True
        self.node_id = next(_node_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


# =========================================
# OP PLUMBING
# =========================================
def _as_tensor(value, like=None):
    """Wrapping constants so they take part in an op without gradients."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def record_op(name, data, inputs, backward_fn):
    """Creating an op output and recording it on the tape when needed."""
    out = Tensor(data)
    out.is_leaf = False
    if __debug__ and settings.DEBUG_NANS:
        _check_finite(name, out.data, inputs)
    if _tape.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _tape.record(name, inputs, out, backward_fn)
    return out


def _check_finite(name, data, inputs):
    if np.all(np.isfinite(data)):
        return
    if all(np.all(np.isfinite(t.data)) for t in inputs):
        raise NumericError(f"{name} produced NaN/Inf from finite inputs")


def unbroadcast(grad, shape):
    """Summing out broadcast axes so the gradient matches `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# =========================================
# ELEMENTWISE OPS
# =========================================
def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape('add', a, b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record_op('add', a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape('sub', a, b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record_op('sub', a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape('mul', a, b)

    def backward_fn(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return record_op('mul', a.data * b.data, (a, b), backward_fn)


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape('div', a, b)

    def backward_fn(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record_op('div', a.data / b.data, (a, b), backward_fn)


def neg(x):
    return record_op('neg', -x.data, (x,), lambda g: (-g,))


def gelu(x):
    """Exact GELU: x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))

    def backward_fn(g):
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * pdf),)

    return record_op('gelu', x.data * cdf, (x,), backward_fn)


# =========================================
# SHAPE OPS
# =========================================
def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}")
    return record_op('reshape', data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return record_op('transpose', x.data.transpose(axes), (x,),
                 lambda g: (g.transpose(inverse),))


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i]
                                 for i in range(ndim) if i != axis):
            raise ShapeError(f"concat: shapes {[u.shape for u in tensors]} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record_op('concat', np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), backward_fn)


def slice_(x, index):
    """Basic or advanced indexing; gradients scatter back with np.add.at."""
    data = x.data[index]

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return record_op('slice', np.array(data), (x,), backward_fn)


def take(x, indices, axis=0):
    """Gathering along one axis with an integer index array."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[axis]):
        raise ShapeError(f"take: index out of range for axis {axis} of shape {x.shape}")
    full_index = (slice(None),) * axis + (indices,)

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, full_index, g)
        return (grad,)

    return record_op('take', np.take(x.data, indices, axis=axis), (x,), backward_fn)


def roll(x, shift, axis):
    """Cyclic shift; token i moves to (i + shift) mod N along `axis`."""
    if shift == 0:
        return x
    return record_op('roll', np.roll(x.data, shift, axis=axis), (x,),
                 lambda g: (np.roll(g, -shift, axis=axis),))


# =========================================
# REDUCTIONS
# =========================================
def sum_(x, axis=None, keepdims=False):
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record_op('sum', np.asarray(data), (x,), backward_fn)


def mean(x, axis=None, keepdims=False):
    data = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return record_op('mean', np.asarray(data), (x,), backward_fn)


# =========================================
# LINEAR ALGEBRA AND NORMALIZATION
# =========================================
def matmul(a, b):
    """
    Batched matrix product a[.., M, K] @ b[.., K, N].

    Leading batch axes broadcast; dA = dC @ B^T and dB = A^T @ dC.
    """
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast")

    def backward_fn(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return record_op('matmul', a.data @ b.data, (a, b), backward_fn)


def softmax(x, axis=-1):
    """Softmax with max-subtraction for stability."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record_op('softmax', out, (x,), backward_fn)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalizing the last axis to zero mean / unit variance, then scale and shift."""
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs input {x.shape}")
    if eps <= 0:
        raise ShapeError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward_fn(g):
        dxhat = g * gamma.data
        dx = (inv_std / dim) * (dim * dxhat
                                - dxhat.sum(axis=-1, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        dgamma = (g * xhat).reshape(-1, dim).sum(axis=0)
        dbeta = g.reshape(-1, dim).sum(axis=0)
        return dx, dgamma, dbeta

    return record_op('layer_norm', xhat * gamma.data + beta.data, (x, gamma, beta), backward_fn)


def linear(x, weight, bias=None):
    """x[.., K] @ weight[K, N] (+ bias[N])."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


# =========================================
# LOSSES
# =========================================
def mse_loss(pred, target):
    """Mean of squared differences over all elements."""
    target = _as_tensor(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    count = diff.size

    def backward_fn(g):
        grad = (2.0 / count) * g * diff
        return grad, -grad

    return record_op('mse_loss', np.asarray((diff * diff).mean()), (pred, target), backward_fn)


def weighted_mse_loss(pred, target, weights):
    """mean(w * (pred - target)^2) with a constant weight array."""
    target = _as_tensor(target, pred)
    weights = np.asarray(weights, dtype=pred.dtype)
    if pred.shape != target.shape or weights.shape != pred.shape:
        raise ShapeError(f"weighted_mse_loss: prediction {pred.shape}, target {target.shape}, "
                         f"weights {weights.shape}")
    diff = pred.data - target.data
    count = diff.size

    def backward_fn(g):
        grad = (2.0 / count) * g * weights * diff
        return grad, -grad

    return record_op('weighted_mse_loss', np.asarray((weights * diff * diff).mean()),
                 (pred, target), backward_fn)


# =========================================
# BACKWARD
# =========================================
def _accumulate(leaf, grad):
    grad = np.asarray(grad, dtype=leaf.dtype).reshape(leaf.shape)
    leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad


def backward(loss, tape=None):
    """
    Populating .grad of every requires_grad leaf connected to `loss`.

    Parameters:
    - loss: scalar Tensor
    - tape: tape to walk (default: the global tape)
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = tape or _tape
    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        if loss.requires_grad:
            _accumulate(loss, seed)
        return

    grads = {loss.node_id: seed}
    for record in reversed(tape.records):
        grad = grads.pop(record.output.node_id, None)
        if grad is None:
            continue
        for inp, inp_grad in zip(record.inputs, record.backward_fn(grad)):
            if inp_grad is None or not inp.requires_grad:
                continue
            if inp.is_leaf:
                _accumulate(inp, inp_grad)
            elif inp.node_id in grads:
                grads[inp.node_id] = grads[inp.node_id] + inp_grad
            else:
                grads[inp.node_id] = inp_grad


# =========================================
# GRADIENT CHECK
# =========================================
def relative_error(analytic, numeric, floor=1e-3):
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def gradient_check(fn, tensors, eps=1e-5, max_entries=None, seed=0):
    """
    Comparing backward() against central finite differences.

    Parameters:
    - fn: zero-argument callable recomputing a scalar Tensor from `tensors`
    - tensors: leaves to check (their .data is perturbed in place and restored)
    - eps: finite-difference step
    - max_entries: optional cap on checked entries, sampled without replacement

    Returns:
    - max relative error over the checked entries
    """
    start = len(_tape)
    for t in tensors:
        t.grad = None
    loss = fn()
    backward(loss)
    _tape.truncate(start)
    analytic_grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    entries = [(i, j) for i, t in enumerate(tensors) for j in range(t.size)]
    if max_entries is not None and len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(entries), size=max_entries, replace=False))
        entries = [entries[k] for k in picked]

    analytic, numeric = [], []
    with no_grad():
        for i, j in entries:
            data = tensors[i].data
            index = np.unravel_index(j, data.shape)
            original = data[index]
            data[index] = original + eps
            plus = fn().item()
            data[index] = original - eps
            minus = fn().item()
            data[index] = original
            numeric.append((plus - minus) / (2.0 * eps))
            analytic.append(analytic_grads[i][index])

    for t in tensors:
        t.grad = None
    error = relative_error(analytic, numeric)
    logger.debug("gradient check over %d entries: max relative error %.3e", len(entries), error)
    return error
