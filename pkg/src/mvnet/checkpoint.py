"""Binary parameter checkpoints.

Layout (all little-endian):
  magic "MVNW", version u16, then one record per tensor until EOF:
    name_len u16, name UTF-8, rank u8, extents u32 each,
    payload as 32-bit IEEE-754 floats.

Payloads are stored as float32, so a save/load cycle is bit-exact for
float32 data; float64 parameters are narrowed on save.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"MVNW"
VERSION = 1


def save_checkpoint(params: dict, path: str) -> None:
    """Write name -> array/Tensor mappings in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        for name, value in params.items():
            arr = np.asarray(getattr(value, "data", value), dtype=np.float32)
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise FormatError(f"tensor name too long: {name[:32]}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(arr.astype("<f4").tobytes(order="C"))


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    """Read a checkpoint back as name -> float32 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    buf = io.BytesIO(blob)

    def need(n: int, what: str) -> bytes:
        chunk = buf.read(n)
        if len(chunk) != n:
            raise FormatError(
                f"truncated checkpoint: wanted {n} bytes for {what} at byte {buf.tell() - len(chunk)}"
            )
        return chunk

    if need(4, "magic") != MAGIC:
        raise FormatError("bad checkpoint magic at byte 0")
    (version,) = struct.unpack("<H", need(2, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte 4")

    out: dict[str, np.ndarray] = {}
    while buf.tell() < len(blob):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", need(1, "rank"))
        shape = tuple(
            struct.unpack("<I", need(4, f"extent {i}"))[0] for i in range(rank)
        )
        count = int(np.prod(shape)) if shape else 1
        payload = need(4 * count, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return out
