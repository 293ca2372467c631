"""Named-tensor checkpoint files.

Layout (all integers little-endian)::

    magic    4 bytes  b"SNCK"
    version  uint16
    count    uint32
    count x entry:
        name_len uint16, name (utf-8)
        ndim     uint8,  dims (uint32 x ndim)
        payload  float32 x prod(dims), little-endian
"""

import struct

import numpy as np

MAGIC = b"SNCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors):
    """Write ``{name: array}``; values are stored as little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(serialize_checkpoint(tensors))


def serialize_checkpoint(tensors):
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return deserialize_checkpoint(fh.read())


def deserialize_checkpoint(blob):
    if blob[:4] != MAGIC:
        raise CheckpointError("not a semnav checkpoint (bad magic)")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 10
    out = {}
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
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape).copy()
        offset += 4 * n
        out[name] = arr
    if offset != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return out
