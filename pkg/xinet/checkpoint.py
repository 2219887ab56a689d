"""
Checkpoint
==========
Binary checkpoint of a model, its optimizer state and the epoch counter.

Layout (little-endian):
- magic b"XINET1"
- uint32 header length
- JSON header: format_version, config, epoch, optimizer step and a tensor
  directory of {name, shape, dtype, offset, nbytes}
- raw tensor bytes, each tensor in its own dtype

Models default to float32, so a default checkpoint holds raw <f4 tensors.
A model configured with dtype float64 is stored as <f8 and reloads bit for
bit; readers of the format should take the dtype from the tensor directory.

Tensor names are prefixed: "param/", "adam_m/", "adam_v/".
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from models import XiNetConfig, parse_config
from xinet.errors import CheckpointError, DataNotFoundError, VariantMismatchError
from xinet.network import build_model

logger = logging.getLogger(__name__)

MAGIC = b'XINET1'
FORMAT_VERSION = 1
_HEADER_LEN = struct.Struct('<I')


@dataclass
class Checkpoint:
    """Config, named parameters, optimizer moments and epoch counter."""

    config: XiNetConfig
    params: dict
    epoch: int = 0
    opt_step: int = 0
    opt_m: dict = field(default_factory=dict)
    opt_v: dict = field(default_factory=dict)


def checkpoint_from_model(model, opt_state=None, epoch=0):
    """Snapshotting a model (and optionally an optimizer state) into a Checkpoint."""
    params = {name: p.data.copy() for name, p in model.named_parameters()}
    if opt_state is None:
        return Checkpoint(model.config, params, epoch)
    return Checkpoint(model.config, params, epoch, opt_state.step,
                      {k: v.copy() for k, v in opt_state.m.items()},
                      {k: v.copy() for k, v in opt_state.v.items()})


def save_checkpoint(path, checkpoint):
    """Writing a Checkpoint to `path`."""
    entries = []
    blobs = []
    offset = 0
    groups = (('param', checkpoint.params), ('adam_m', checkpoint.opt_m), ('adam_v', checkpoint.opt_v))
    for prefix, tensors in groups:
        for name, array in tensors.items():
            array = np.ascontiguousarray(array)
            stored = array.astype(array.dtype.newbyteorder('<'))
            raw = stored.tobytes()
            entries.append({
                'name': f"{prefix}/{name}",
                'shape': list(array.shape),
                'dtype': stored.dtype.str,
                'offset': offset,
                'nbytes': len(raw),
            })
            blobs.append(raw)
            offset += len(raw)

    header = {
        'format_version': FORMAT_VERSION,
        'config': checkpoint.config.model_dump(),
        'epoch': checkpoint.epoch,
        'optimizer': {'step': checkpoint.opt_step},
        'tensors': entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')

    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(_HEADER_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        for raw in blobs:
            f.write(raw)
    logger.info("saved checkpoint %s (%d tensors, epoch %d)", path, len(entries), checkpoint.epoch)


def read_checkpoint(path):
    """Reading a Checkpoint from `path` without binding it to a model."""
    if not os.path.exists(path):
        raise DataNotFoundError(f"checkpoint not found: {path}")
    with open(path, 'rb') as f:
        payload = f.read()

    if payload[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {payload[:len(MAGIC)]!r}, expected {MAGIC!r}")
    cursor = len(MAGIC)
    if len(payload) < cursor + _HEADER_LEN.size:
        raise CheckpointError(f"{path}: truncated before header length")
    (header_len,) = _HEADER_LEN.unpack_from(payload, cursor)
    cursor += _HEADER_LEN.size
    if len(payload) < cursor + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(payload[cursor:cursor + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})")
    cursor += header_len

    if header.get('format_version') != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    config = parse_config(XiNetConfig, header['config'])
    groups = {'param': {}, 'adam_m': {}, 'adam_v': {}}
    blob = payload[cursor:]
    for entry in header['tensors']:
        prefix, _, name = entry['name'].partition('/')
        if prefix not in groups:
            raise CheckpointError(f"{path}: unknown tensor group in '{entry['name']}'")
        start, size = entry['offset'], entry['nbytes']
        if start + size > len(blob):
            raise CheckpointError(f"{path}: truncated data for tensor '{entry['name']}'")
        array = np.frombuffer(blob[start:start + size], dtype=np.dtype(entry['dtype']))
        groups[prefix][name] = array.astype(array.dtype.newbyteorder('=')).reshape(entry['shape'])

    return Checkpoint(config, groups['param'], header.get('epoch', 0),
                      header.get('optimizer', {}).get('step', 0),
                      groups['adam_m'], groups['adam_v'])


def load_into(model, checkpoint):
    """
    Copying checkpoint parameters into a model.

    Raises:
    - VariantMismatchError when the checkpoint was written for another variant
    - CheckpointError for unknown, missing or misshapen tensors
    """
    if checkpoint.config.variant != model.config.variant:
        raise VariantMismatchError(f"checkpoint variant '{checkpoint.config.variant}' does not "
                                   f"match model variant '{model.config.variant}'")
    params = dict(model.named_parameters())
    unknown = sorted(set(checkpoint.params) - set(params))
    if unknown:
        raise CheckpointError(f"unknown tensor name '{unknown[0]}' in checkpoint")
    missing = sorted(set(params) - set(checkpoint.params))
    if missing:
        raise CheckpointError(f"checkpoint lacks tensor '{missing[0]}'")
    for name, param in params.items():
        array = checkpoint.params[name]
        if array.shape != param.shape:
            raise CheckpointError(f"tensor '{name}' has shape {array.shape}, model expects {param.shape}")
        param.data = array.astype(param.dtype, copy=True)
        param.grad = None
    return model


def load_checkpoint(path, model=None):
    """
    Loading a checkpoint; builds a model from its config unless one is given.

    Returns:
    - (model, Checkpoint)
    """
    checkpoint = read_checkpoint(path)
    if model is None:
        model = build_model(checkpoint.config)
    load_into(model, checkpoint)
    return model, checkpoint
