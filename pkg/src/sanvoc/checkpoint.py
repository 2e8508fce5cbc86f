"""Binary checkpoint container.

Layout (little-endian throughout):

    magic "SVCK" | u32 format version | tensor records ... | u32 CRC32

Each record: u32 name length, UTF-8 name, u32 rank, u64 dims, u8 dtype
tag (0 = f32, 1 = f64), row-major payload.  The trailing CRC32 covers
every preceding byte.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"SVCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""


def save_tensors(path, tensors: dict) -> None:
    """Write {name: ndarray}; only f32/f64 arrays are accepted."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        shape = arr.shape  # before ascontiguousarray, which promotes 0-d to 1-d
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _TAGS:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}Q", *shape) if shape else b"")
        parts.append(struct.pack("<B", _TAGS[arr.dtype]))
        parts.append(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_tensors(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint header")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: CRC mismatch (truncated or corrupt file)")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    pos = 8
    out = {}
    try:
        while pos < len(body):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            (tag,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dtype = _DTYPES[tag]
            count = int(np.prod(dims)) if rank else 1
            nbytes = count * dtype.itemsize
            arr = np.frombuffer(body[pos : pos + nbytes], dtype=dtype)
            if arr.size != count:
                raise CheckpointError(f"{path}: truncated payload for tensor {name!r}")
            pos += nbytes
            out[name] = arr.reshape(dims).copy()
    except (struct.error, KeyError) as e:
        raise CheckpointError(f"{path}: malformed record at offset {pos}") from e
    return out


# -- RNG state <-> tensor ----------------------------------------------------

def rng_state_array(rng: np.random.Generator) -> np.ndarray:
    """Serialize a PCG64 generator state as exactly representable f64 chunks."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise CheckpointError(f"unsupported bit generator {st['bit_generator']}")
    vals = []
    for key in ("state", "inc"):
        v = st["state"][key]
        vals.extend((v >> (32 * i)) & 0xFFFFFFFF for i in range(4))
    vals.append(st["has_uint32"])
    vals.append(st["uinteger"])
    return np.asarray(vals, dtype=np.float64)


def rng_from_state_array(arr) -> np.random.Generator:
    vals = [int(v) for v in np.asarray(arr)]
    state = sum(vals[i] << (32 * i) for i in range(4))
    inc = sum(vals[4 + i] << (32 * i) for i in range(4))
    bg = np.random.PCG64()
    bg.state = {"bit_generator": "PCG64", "state": {"state": state, "inc": inc},
                "has_uint32": vals[8], "uinteger": vals[9]}
    return np.random.Generator(bg)
