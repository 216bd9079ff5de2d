"""Binary checkpoint files: named float32 arrays with a versioned header.

Layout (all little-endian):

    magic   4 bytes  b"CPCK"
    version u32      currently 1
    step    u64      optimizer step counter
    count   u32      number of records
    record: name_len u16, name utf-8, ndim u8, dims u32 each, data f32

Arrays are stored and restored as float32, so a round trip of float32
state is bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CPCK"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], step: int = 0) -> None:
    buf = [MAGIC, struct.pack("<IQI", VERSION, step, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.append(struct.pack("<H", len(raw)))
        buf.append(raw)
        buf.append(struct.pack("<B", arr.ndim))
        buf.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.append(arr.tobytes())
    Path(path).write_bytes(b"".join(buf))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    version, step, count = struct.unpack_from("<IQI", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 4 + 16
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(
            blob, dtype="<f4", count=n, offset=offset
        ).reshape(shape).copy()
        offset += 4 * n
    return arrays, step
