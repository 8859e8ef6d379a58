"""Versioned binary container used for window caches and checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"FLOWDET\\n"
    4 bytes   format version (uint32)
    8 bytes   header length N (uint64)
    N bytes   UTF-8 JSON header: kind, meta, array manifest
    ...       array payloads, little-endian, C order, at manifest offsets
    32 bytes  SHA-256 of every preceding byte
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError, IncompatibleVersionError, IntegrityError

MAGIC = b"FLOWDET\n"
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32
_DTYPES = {"f8": "<f8", "i8": "<i8"}


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary sibling then rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def pack(kind: str, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        manifest.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": manifest}, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, version, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def unpack(blob: bytes, kind: str, supported: tuple[int, ...]) -> tuple[dict, dict[str, np.ndarray], int]:
    if len(blob) < _PREFIX.size + _DIGEST:
        raise IntegrityError("file is truncated")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("checksum mismatch: file is corrupted or truncated")
    magic, version, hlen = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise IntegrityError("not a flowdetect container")
    if version not in supported:
        raise IncompatibleVersionError(f"format version {version} is not supported (supported: {list(supported)})")
    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable header: {exc}") from exc
    if header.get("kind") != kind:
        raise DataError(f"expected a {kind!r} file, found {header.get('kind')!r}")
    payload = body[start + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        lo, n = entry["offset"], entry["nbytes"]
        if lo + n > len(payload):
            raise IntegrityError(f"array {entry['name']!r} extends past the end of the file")
        arr = np.frombuffer(payload[lo:lo + n], dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return header["meta"], arrays, version


def write_container(path, kind: str, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, pack(kind, version, meta, arrays))


def read_container(path, kind: str, supported: tuple[int, ...]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    return unpack(path.read_bytes(), kind, supported)
