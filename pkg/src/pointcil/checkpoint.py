"""Flat binary archive of named float32 arrays.

Record layout, little-endian, repeated until EOF:
    u32 name_len | name bytes (utf-8) | u32 rank | u32 dim * rank | f32 data
Records are written in sorted name order so equal contents give equal bytes.
"""

from __future__ import annotations

import struct

import numpy as np


def save_checkpoint(arrays: dict, path) -> None:
    with open(path, "wb") as fh:
        for name in sorted(arrays):
            # asarray keeps 0-d arrays rank 0 (ascontiguousarray would not)
            arr = np.asarray(arrays[name], dtype="<f4", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    arrays = {}
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ValueError(f"load_checkpoint: truncated archive at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    while pos < len(data):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        arrays[name] = arr.copy()
    return arrays
