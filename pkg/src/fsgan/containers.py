"""Flat binary container for named float64 arrays.

Layout: a JSON manifest (UTF-8) followed by the raw array payload.  The file
starts with an 8-byte magic string and a little-endian uint64 manifest
length, so readers can locate the payload without scanning.  Each manifest
entry records name, shape, and byte offset into the payload.  All arrays are
stored little-endian float64, C order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FSGANBIN"


class ContainerError(ValueError):
    """The file is not a valid container or an entry is malformed."""


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays (plus an optional JSON-compatible ``meta`` block)."""
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(np.asarray(arrays[name], dtype="<f8"))
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = {"entries": entries, "meta": meta or {}}
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; returns (arrays, meta)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: bad magic, not a container file")
    if len(raw) < len(MAGIC) + 8:
        raise ContainerError(f"{path}: truncated header")
    n = struct.unpack_from("<Q", raw, len(MAGIC))[0]
    start = len(MAGIC) + 8
    if start + n > len(raw):
        raise ContainerError(f"{path}: manifest overruns file")
    try:
        manifest = json.loads(raw[start : start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable manifest: {exc}") from None
    if not isinstance(manifest, dict) or "entries" not in manifest:
        raise ContainerError(f"{path}: manifest missing entries block")
    payload = raw[start + n :]
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        if off + count * 8 > len(payload):
            raise ContainerError(f"{path}: entry {entry['name']!r} overruns payload")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, manifest.get("meta", {})
