"""Versioned binary container for named float64 arrays plus JSON metadata.

Layout (little-endian)::

    4 bytes  magic (caller-chosen, e.g. b"IBCK")
    u16      format version
    u32      header length H
    H bytes  UTF-8 JSON header {"meta": ..., "arrays": [{"name", "shape"}, ...]}
    ...      the arrays' float64 data, concatenated in header order

Writing is byte-deterministic: the header is serialized with sorted keys.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ibis.errors import FormatError

_PREFIX = struct.Struct("<4sHI")


def write_container(path, magic: bytes, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    chunks = [_PREFIX.pack(magic, version, len(header)), header]
    chunks += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values()]
    Path(path).write_bytes(b"".join(chunks))


def read_container(path, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if len(buf) < _PREFIX.size:
        raise FormatError("truncated container prefix", len(buf))
    got_magic, got_version, hlen = _PREFIX.unpack_from(buf, 0)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}", 0)
    if got_version != version:
        raise FormatError(f"unsupported container version {got_version}", 4)
    off = _PREFIX.size
    if len(buf) < off + hlen:
        raise FormatError("truncated container header", len(buf))
    try:
        header = json.loads(buf[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt container header: {exc}", off) from None
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if len(buf) < off + nbytes:
            raise FormatError(f"truncated array {entry['name']!r}", len(buf))
        arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(buf):
        raise FormatError("trailing bytes after last array", off)
    return header["meta"], arrays
