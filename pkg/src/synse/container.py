"""Binary container used for every on-disk array artifact.

Layout:
    magic        8 bytes, b"SYNSEC1\\n"
    header_len   8 bytes, little-endian uint64
    header       UTF-8 JSON: {"byte_order": "little",
                              "arrays": [{"name", "dtype", "shape"}, ...],
                              "meta": {...}}
    payload      the arrays, in header order, row-major, little-endian

Only float32, float64 and int64 payloads are accepted; payload byte order is
always little-endian regardless of platform.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SYNSEC1\n"
_ALLOWED_DTYPES = {"float32", "float64", "int64"}


def write_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays plus a free-form metadata dict to *path*."""
    entries = []
    blobs = []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        if a.dtype.name not in _ALLOWED_DTYPES:
            raise FormatError(f"array {name!r}: dtype {a.dtype.name} not storable")
        little = a.astype(a.dtype.newbyteorder("<"), copy=False)
        entries.append({"name": name, "dtype": a.dtype.name, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(little).tobytes())
    header = {"byte_order": "little", "arrays": entries, "meta": meta or {}}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; returns (arrays, meta).

    Raises FormatError on a bad magic, malformed header, or a payload whose
    length disagrees with the declared shapes.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a container file (bad magic)")
    (header_len,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    header_start = len(MAGIC) + 8
    header_end = header_start + header_len
    if header_end > len(raw):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    if header.get("byte_order") != "little":
        raise FormatError(f"{path}: unsupported byte order {header.get('byte_order')!r}")

    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for entry in header.get("arrays", []):
        dtype_name = entry["dtype"]
        if dtype_name not in _ALLOWED_DTYPES:
            raise FormatError(f"{path}: array {entry['name']!r} has unsupported dtype {dtype_name}")
        dtype = np.dtype(dtype_name).newbyteorder("<")
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated payload for array {entry['name']!r}")
        data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        arrays[entry["name"]] = data.reshape(shape).astype(np.dtype(dtype_name), copy=True)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after declared payload")
    return arrays, header.get("meta", {})
