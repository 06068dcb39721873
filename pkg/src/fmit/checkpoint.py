"""Binary checkpoint format.

Layout::

    b"FMITCKPT"                 8-byte magic
    uint64 little-endian        manifest length in bytes
    manifest                    UTF-8 JSON, keys sorted
    payloads                    raw little-endian floats, in manifest order

The manifest carries ``format_version``, ``precision``, a ``params`` list of
``{"name", "shape"}`` entries and a free-form ``meta`` object.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMITCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None,
                    precision: str | None = None) -> None:
    arrays = {name: np.asarray(a) for name, a in params.items()}
    if precision is None:
        kinds = {a.dtype.name for a in arrays.values()} or {"float32"}
        if len(kinds) != 1:
            raise CheckpointError(f"mixed parameter precisions {sorted(kinds)}")
        precision = kinds.pop()
    if precision not in ("float32", "float64"):
        raise CheckpointError(f"unsupported precision {precision!r}")
    dtype = np.dtype(precision).newbyteorder("<")
    manifest = {
        "format_version": FORMAT_VERSION,
        "precision": precision,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in arrays.items()],
        "meta": meta or {},
    }
    head = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for a in arrays.values():
            f.write(np.ascontiguousarray(a, dtype=dtype).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, str]:
    """Return ``(params, meta, precision)``; params keep manifest order."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (size,) = struct.unpack("<Q", raw[8:16])
    try:
        manifest = json.loads(raw[16:16 + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')}")
    precision = manifest["precision"]
    dtype = np.dtype(precision).newbyteorder("<")
    offset = 16 + size
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated payload for {entry['name']!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
        params[entry["name"]] = arr.astype(np.dtype(precision))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return params, manifest["meta"], precision
