"""Binary checkpoint container.

Layout: the magic line `ADENET1`, one line of JSON metadata (which includes
`array_count`), then per array: a name line, a `<rank> <dims...>` line, and
the raw row-major little-endian float32 values. Writes go through a temp
file plus rename so an interrupted save never corrupts an existing file.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import CheckpointError

MAGIC = b"ADENET1\n"


def save_arrays(path, metadata: dict, arrays: dict) -> None:
    meta = dict(metadata)
    meta["array_count"] = len(arrays)
    meta["precision"] = "float32"
    for name in arrays:
        if "\n" in name or not name:
            raise CheckpointError(f"invalid array name {name!r}")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            f.write(name.encode("utf-8") + b"\n")
            dims = " ".join(str(d) for d in a.shape)
            f.write(f"{a.ndim} {dims}".strip().encode("ascii") + b"\n")
            f.write(a.tobytes())
    os.replace(tmp, path)


def load_arrays(path):
    """Returns (metadata, arrays); raises CheckpointError on any inconsistency."""
    with open(path, "rb") as f:
        if f.readline() != MAGIC:
            raise CheckpointError(f"{path}: not an ADENET1 checkpoint")
        try:
            metadata = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt metadata block: {exc}") from exc
        count = metadata.get("array_count")
        if not isinstance(count, int) or count < 0:
            raise CheckpointError(f"{path}: missing or invalid array_count")
        arrays = {}
        for _ in range(count):
            name = f.readline().rstrip(b"\n").decode("utf-8")
            header = f.readline().split()
            if not name or not header:
                raise CheckpointError(f"{path}: truncated array section")
            rank = int(header[0])
            dims = tuple(int(d) for d in header[1:])
            if len(dims) != rank:
                raise CheckpointError(f"{path}: bad dims for array {name!r}")
            n_bytes = 4 * int(np.prod(dims)) if dims else 4
            raw = f.read(n_bytes)
            if len(raw) != n_bytes:
                raise CheckpointError(f"{path}: array {name!r} is truncated")
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return metadata, arrays
