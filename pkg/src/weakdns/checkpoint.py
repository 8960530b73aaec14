"""Named-tensor checkpoint container.

Binary layout, all little-endian:
    magic   4 bytes  b"WDNS"
    version u32      currently 1
    then zero or more tensor records until end of file:
        name_len u32, name (UTF-8), rank u32, dims rank*u64, payload
        float32 values in row-major order.

Round-trips are bit-exact: values written are float32 and come back as
the identical float32 values (widened to float64 for computation).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"WDNS"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            data = np.asarray(arr, dtype=np.float32)  # tobytes() emits C order
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            f.write(data.tobytes())


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Load a container; values are returned as float64 arrays."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise DataError(f"{path}: truncated or corrupt tensor record ({exc})") from exc
        if name in out:
            raise DataError(f"{path}: duplicate tensor name '{name}'")
        out[name] = payload.astype(np.float64).reshape(tuple(dims))
    return out
