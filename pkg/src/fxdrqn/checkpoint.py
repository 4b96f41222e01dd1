"""Deterministic binary container for tensors plus JSON metadata.

Layout (all integers little-endian):

    bytes 0..7     magic  b"FXDRQNCK"
    bytes 8..11    uint32 format version
    bytes 12..19   uint64 header length n
    next n bytes   UTF-8 JSON header, keys sorted:
                   {"meta": {...}, "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    remainder      raw C-order tensor data; offsets are relative to the start of this block

Tensors are written in the order given, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FXDRQNCK"
VERSION = 1


def dumps(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8", copy=False)
        elif arr.dtype.kind in "iub":
            arr = arr.astype("<i8", copy=False)
        else:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name}")
        data = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(blobs)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if buf[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, n = struct.unpack("<IQ", buf[8:20])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(buf[20:20 + n].decode())
    body = memoryview(buf)[20 + n:]
    tensors = {}
    for e in header["tensors"]:
        raw = body[e["offset"]:e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return tensors, header["meta"]


def save(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
