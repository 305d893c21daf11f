"""Binary containers for parameter checkpoints and raw tensor dumps.

Checkpoint layout (all integers little-endian)::

    magic    8 bytes   b"DBCKPT\\x00\\x00"
    version  uint32    CHECKPOINT_VERSION
    count    uint32    number of records
    record * count:
        name_len  uint16, name  utf-8 bytes
        ndim      uint8,  dims  uint32 * ndim
        values    float64 * prod(dims), C order

Records are written in lexicographic name order, so identical parameters
always produce byte-identical files.

Raw tensor dump layout::

    magic    8 bytes   b"DBRAW\\x00\\x00\\x00"
    version  uint32    RAW_VERSION
    ndim     uint32,   dims uint32 * ndim
    values   float64 * prod(dims), C order
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from ..errors import CheckpointError
from .optim import ParameterSet

CHECKPOINT_MAGIC = b"DBCKPT\x00\x00"
CHECKPOINT_VERSION = 1
RAW_MAGIC = b"DBRAW\x00\x00\x00"
RAW_VERSION = 1

PathLike = Union[str, Path]


def save_checkpoint(path: PathLike, params: Union[ParameterSet, Mapping[str, np.ndarray]]) -> None:
    if isinstance(params, ParameterSet):
        arrays = {name: t.data for name, t in params.items()}
    else:
        arrays = dict(params)
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if buf[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    try:
        version, count = struct.unpack_from("<II", buf, 8)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        offset = 16
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", buf, offset)
            offset += 2
            name = buf[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", buf, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(buf, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            out[name] = values.reshape(shape).astype(np.float64)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if offset != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - offset} trailing bytes after last record")
    return out


def load_into(params: ParameterSet, arrays: Mapping[str, np.ndarray]) -> None:
    """Copy checkpoint values into ``params``; names and shapes must match exactly."""
    expected = set(params.names())
    found = set(arrays)
    if expected != found:
        missing = sorted(expected - found)
        extra = sorted(found - expected)
        raise CheckpointError(f"architecture mismatch: missing {missing}, unexpected {extra}")
    for name, tensor in params.items():
        arr = arrays[name]
        if arr.shape != tensor.shape:
            raise CheckpointError(f"architecture mismatch for {name!r}: checkpoint {arr.shape}, model {tensor.shape}")
        tensor.data[...] = arr


def save_raw(path: PathLike, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype="<f8", order="C")
    header = RAW_MAGIC + struct.pack("<II", RAW_VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def load_raw(path: PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:8] != RAW_MAGIC:
        raise CheckpointError(f"{path}: not a raw tensor dump (bad magic)")
    version, ndim = struct.unpack_from("<II", buf, 8)
    if version != RAW_VERSION:
        raise CheckpointError(f"{path}: unsupported raw dump version {version}")
    shape = struct.unpack_from(f"<{ndim}I", buf, 16)
    offset = 16 + 4 * ndim
    n = int(np.prod(shape)) if ndim else 1
    if len(buf) - offset != 8 * n:
        raise CheckpointError(f"{path}: expected {8 * n} data bytes, found {len(buf) - offset}")
    return np.frombuffer(buf, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)
