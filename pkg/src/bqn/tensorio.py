"""Raw tensor files: 16-byte header (magic "BQNX" + three u32 dims),
then float32 little-endian payload, row-major. Used for recorded
frames and saved counterexamples."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"BQNX"


class TensorFormatError(ValueError):
    pass


def save_tensor(path: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim != 3:
        raise TensorFormatError(f"tensor files hold 3-d arrays, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", *arr.shape))
        fh.write(arr.tobytes())


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise TensorFormatError(f"file too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {data[:4]!r}")
    dims = struct.unpack("<III", data[4:16])
    count = dims[0] * dims[1] * dims[2]
    payload = data[16:]
    if len(payload) != 4 * count:
        raise TensorFormatError(
            f"payload has {len(payload)} bytes, expected {4 * count}"
        )
    return (
        np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    )
