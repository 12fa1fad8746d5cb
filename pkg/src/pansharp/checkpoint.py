"""Deterministic binary checkpoint container.

Layout: 8-byte magic, u64 little-endian header length, JSON header (sorted
keys), then raw little-endian array payloads in header order. The header
carries the model config, free-form metadata, and a blob table with dtype,
shape, and crc32 per array. No timestamps or environment data anywhere, so
identical state always serializes to identical bytes.
"""
from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"PSCKPT01"
_DTYPE_TAGS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _dtype_tag(arr):
    tag = np.dtype(arr.dtype).newbyteorder("<").str
    if tag not in _DTYPE_TAGS:
        raise TypeError(f"checkpoint: unsupported dtype {arr.dtype}")
    return tag


def save_blobs(path, config, meta, blobs):
    """Write {name: array} with a config dict and metadata dict."""
    table = []
    payloads = []
    for name in sorted(blobs):
        arr = np.ascontiguousarray(blobs[name])
        raw = arr.astype(_DTYPE_TAGS[_dtype_tag(arr)], copy=False).tobytes()
        table.append(
            {
                "name": name,
                "dtype": _dtype_tag(arr),
                "shape": list(arr.shape),
                "crc32": zlib.crc32(raw),
            }
        )
        payloads.append(raw)
    header = {"version": 1, "config": config, "meta": meta, "blobs": table}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for raw in payloads:
            f.write(raw)


def load_blobs(path):
    """Read back (config, meta, {name: array}); crc mismatches raise."""
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise ValueError(f"checkpoint: {path} has a bad magic header")
    (head_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    head_start = len(MAGIC) + 8
    header = json.loads(blob[head_start:head_start + head_len].decode("ascii"))
    if header.get("version") != 1:
        raise ValueError(f"checkpoint: unsupported version {header.get('version')!r}")
    offset = head_start + head_len
    arrays = {}
    for entry in header["blobs"]:
        dt = _DTYPE_TAGS[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dt.itemsize
        raw = blob[offset:offset + nbytes]
        if len(raw) != nbytes:
            raise ValueError(
                f"checkpoint: {path} is truncated at blob {entry['name']!r} "
                f"({len(raw)} of {nbytes} bytes)"
            )
        if zlib.crc32(raw) != entry["crc32"]:
            raise ValueError(f"checkpoint: crc mismatch in blob {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"checkpoint: {path} has {len(blob) - offset} trailing bytes")
    return header["config"], header["meta"], arrays
