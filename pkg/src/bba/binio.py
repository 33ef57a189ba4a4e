"""Small self-describing binary container used for datasets and checkpoints.

Layout::

    magic      4 bytes   b"BBAF"
    version    uint32 LE
    kind       uint32 LE length + utf-8 bytes
    header     uint32 LE length + utf-8 JSON (sorted keys)
    arrays     for each name listed in header["arrays"], raw little-endian bytes

The JSON header records dtype and shape of every array, so reading back is
bit-exact and writing the same content twice gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BBAF"
VERSION = 1


class FormatError(ValueError):
    """Raised on malformed, truncated or version-mismatched files."""


class VersionError(FormatError):
    pass


def _le_dtype(arr):
    return arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype


def write(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    names = list(arrays)
    specs = {}
    for name in names:
        a = np.ascontiguousarray(arrays[name])
        specs[name] = {"dtype": _le_dtype(a).str, "shape": list(a.shape)}
    header = {"meta": meta, "arrays": names, "specs": specs}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    kbytes = kind.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(kbytes)))
        fh.write(kbytes)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for name in names:
            a = np.ascontiguousarray(arrays[name])
            fh.write(a.astype(_le_dtype(a), copy=False).tobytes())


def read(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated while reading {what} at byte offset {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise VersionError(f"{path}: file version {version}, reader supports {VERSION}")
    (klen,) = struct.unpack("<I", take(4, "kind length"))
    file_kind = take(klen, "kind").decode("utf-8")
    if kind is not None and file_kind != kind:
        raise FormatError(f"{path}: expected a {kind!r} file, found {file_kind!r}")
    (hlen,) = struct.unpack("<I", take(4, "header length"))
    try:
        header = json.loads(take(hlen, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header at byte offset {pos - hlen}: {exc}") from exc

    arrays = {}
    for name in header["arrays"]:
        spec = header["specs"][name]
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        buf = take(nbytes, f"array {name!r}")
        arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes after offset {pos}")
    return header["meta"], arrays
