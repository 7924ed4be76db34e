"""Binary network checkpoints plus a JSON metadata sidecar.

Layout (all little-endian)::

    b"VCAT" | u32 version | u32 n_dims | u32 dims[n_dims]
            | u8 activation_tag[n_dims - 1]
            | per layer: f64 weights (out x in, row-major), f64 biases (out)
"""

import json
import os
import struct
from pathlib import Path

import numpy as np

from advtrain.errors import FormatError
from advtrain.nn.mlp import ACTIVATIONS, MlpNet

MAGIC = b"VCAT"
FORMAT_VERSION = 1
_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}


def encode(net):
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(net.layer_dims))]
    parts.append(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
    parts.append(bytes(_TAGS[a] for a in net.activations))
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(data):
    view = memoryview(data)
    if len(view) < 12 or bytes(view[:4]) != MAGIC:
        raise FormatError("not a network checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", view, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"checkpoint format version {version} is incompatible with {FORMAT_VERSION}")
    if n < 2 or n > 64:
        raise FormatError(f"implausible layer count {n}")
    off = 12
    need = off + 4 * n + (n - 1)
    if len(view) < need:
        raise FormatError("truncated checkpoint header")
    dims = struct.unpack_from(f"<{n}I", view, off)
    off += 4 * n
    tags = bytes(view[off : off + n - 1])
    off += n - 1
    try:
        acts = tuple(ACTIVATIONS[t] for t in tags)
    except IndexError:
        raise FormatError("unknown activation tag") from None
    expected = off + 8 * sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))
    if len(view) != expected:
        raise FormatError(f"checkpoint payload is {len(view)} bytes, expected {expected}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(view, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_out, fan_in)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(view, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpNet(dims, acts, weights, biases)


def sidecar_path(path):
    return Path(str(path) + ".json")


def save(net, path, metadata=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(net))
    os.replace(tmp, path)
    if metadata is not None:
        sidecar_path(path).write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def load(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"checkpoint {path} does not exist") from None
    return decode(data)


def load_metadata(path):
    p = sidecar_path(path)
    if not p.exists():
        return {}
    return json.loads(p.read_text())
