"""Binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"MOLDIFF\\x00"
    uint32    format version
    uint64    metadata length L
    L bytes   UTF-8 JSON metadata: {"tensors": [{name, shape, offset, nbytes}], ...}
    blocks    per tensor: float32 '<f4' data followed by an 8-byte blake2b digest

Offsets are relative to the first byte after the metadata. Every block is
read and verified before anything is returned, so a damaged file never
yields partial state.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"MOLDIFF\x00"
VERSION = 1
_DIGEST = 8


class CheckpointError(ValueError):
    """Unreadable, corrupted or incompatible checkpoint file."""


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=_DIGEST).digest()


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray], metadata: Mapping) -> None:
    """Write tensors (stored as float32) and JSON-serializable metadata atomically."""
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        blobs.append(data + _digest(data))
        offset += len(data) + _DIGEST
    meta = dict(metadata)
    meta["tensors"] = entries
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(tensors, metadata)`` after verifying every block."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 12
    if start + hlen > len(raw):
        raise CheckpointError("truncated metadata")
    try:
        meta = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted metadata: {exc}") from exc
    body = start + hlen
    tensors: dict[str, np.ndarray] = {}
    for e in meta.get("tensors", []):
        lo = body + e["offset"]
        hi = lo + e["nbytes"]
        if hi + _DIGEST > len(raw):
            raise CheckpointError(f"truncated tensor block {e['name']!r}")
        data = raw[lo:hi]
        if _digest(data) != raw[hi:hi + _DIGEST]:
            raise CheckpointError(f"checksum mismatch in tensor block {e['name']!r}")
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        if count * 4 != e["nbytes"]:
            raise CheckpointError(f"length mismatch in tensor block {e['name']!r}")
        tensors[e["name"]] = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(e["shape"])
    return tensors, meta
