"""
Binary checkpoints for `MlpModel`.

Layout (little-endian):
    b"ETID" | u32 format_version | u32 layer count | u32 layer sizes ...
    | per layer: f64 weights (row-major), f64 biases | i64 training seed (-1 if unknown)
"""

import os
import struct
import tempfile
import logging
from typing import List

import numpy as np

from models.mlp import MlpModel
from utils.exceptions import FormatError, VersionMismatchError

logger = logging.getLogger(__name__)

MAGIC = b"ETID"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_F64 = np.dtype("<f8")


def encode_checkpoint(model: MlpModel) -> bytes:
    parts: List[bytes] = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(model.layer_sizes))]
    parts.extend(_U32.pack(size) for size in model.layer_sizes)
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype=_F64).tobytes())
        parts.append(np.ascontiguousarray(b, dtype=_F64).tobytes())
    parts.append(_I64.pack(-1 if model.seed is None else int(model.seed)))
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> MlpModel:
    if len(blob) < _HEADER.size:
        raise FormatError("checkpoint truncated: missing header")
    magic, version, n_sizes = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"not a checkpoint: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    if n_sizes < 2:
        raise FormatError(f"checkpoint declares {n_sizes} layer sizes, need at least 2")

    offset = _HEADER.size
    if len(blob) < offset + n_sizes * _U32.size:
        raise FormatError("checkpoint truncated: layer sizes")
    sizes = [_U32.unpack_from(blob, offset + i * _U32.size)[0] for i in range(n_sizes)]
    offset += n_sizes * _U32.size

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            nbytes = count * _F64.itemsize
            if len(blob) < offset + nbytes:
                raise FormatError("checkpoint truncated: parameter data")
            array = np.frombuffer(blob, dtype=_F64, count=count, offset=offset).reshape(shape)
            offset += nbytes
            (weights if len(shape) == 2 else biases).append(array.astype(np.float64))

    if len(blob) != offset + _I64.size:
        raise FormatError(f"checkpoint has {len(blob) - offset} trailing bytes, expected {_I64.size}")
    seed = _I64.unpack_from(blob, offset)[0]

    for array in weights + biases:
        if not np.all(np.isfinite(array)):
            raise FormatError("checkpoint contains non-finite parameters")

    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases,
                    seed=None if seed < 0 else seed)


def save_checkpoint(model: MlpModel, path: str) -> str:
    """Write atomically: temp file in the target directory, then replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    blob = encode_checkpoint(model)
    with tempfile.NamedTemporaryFile(mode='wb', delete=False, dir=directory) as temp_file:
        temp_file.write(blob)
        temp_file.flush()
        os.fsync(temp_file.fileno())
        temp_name = temp_file.name
    os.replace(temp_name, path)
    return path


def load_checkpoint(path: str) -> MlpModel:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, 'rb') as f:
        blob = f.read()
    try:
        return decode_checkpoint(blob)
    except FormatError as e:
        raise type(e)(f"{path}: {e}") from None
