"""Binary tensor container used for every on-disk array artifact.

Layout: magic "NOPT", u8 version (=1), u8 dtype code (0 = float64,
1 = complex128), u8 ndim, ndim little-endian u64 extents, then the
row-major little-endian payload. Readers reject unknown magic or version
instead of guessing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"NOPT"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        # everything in this library is f64 or c128; coerce floats, refuse the rest
        if np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.complex128)
        elif np.issubdtype(arr.dtype, np.number) or arr.dtype == np.bool_:
            arr = arr.astype(np.float64)
        else:
            raise DataError(f"unsupported dtype {arr.dtype} for tensor container")
    code = _DTYPE_CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    payload = np.ascontiguousarray(arr).astype(_CODE_DTYPES[code], copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 7:
        raise DataError(f"{path}: truncated tensor container")
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, code, ndim = struct.unpack("<BBB", raw[4:7])
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    if code not in _CODE_DTYPES:
        raise DataError(f"{path}: unknown dtype code {code}")
    offset = 7 + 8 * ndim
    if len(raw) < offset:
        raise DataError(f"{path}: truncated shape header")
    shape = struct.unpack(f"<{ndim}Q", raw[7:offset]) if ndim else ()
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = offset + count * dtype.itemsize
    if len(raw) != expected:
        raise DataError(f"{path}: payload size {len(raw) - offset}, expected {expected - offset}")
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
    # native-endian writable copy
    return arr.astype(dtype.newbyteorder("="))


def write_kv(path, fields: dict) -> None:
    """Write an ordered key = value text manifest atomically."""
    path = Path(path)
    lines = [f"{k} = {v}" for k, v in fields.items()]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_kv(path) -> dict:
    """Parse a key = value manifest; blank lines and # comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no manifest at {path}")
    fields: dict[str, str] = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"malformed manifest line in {path}: {line!r}")
        key, _, val = line.partition("=")
        fields[key.strip()] = val.strip()
    return fields
