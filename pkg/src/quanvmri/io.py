"""On-disk formats: QMRT tensor files, QMRC checkpoints, PGM exports, and
plain-text run configs.

QMRT tensor file (little-endian throughout):
    magic   4 bytes  b"QMRT"
    version u8       1
    dtype   u8       0=f32  1=f64  2=c64  3=c128
    ndim    u8
    dims    ndim x u32
    payload row-major contiguous array data

QMRC checkpoint:
    magic        4 bytes  b"QMRC"
    version      u8       1
    config_hash  32 bytes sha256 of the resolved config text
    config_len   u32, followed by that many bytes of utf-8 config text
    n_entries    u32
    entries      name_len u16 + utf-8 name, then dtype u8 / ndim u8 /
                 dims u32 each / payload (same encoding as QMRT)

Writes go through a temp file + atomic rename so concurrent readers never
see a torn file.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"QMRT"
CHECKPOINT_MAGIC = b"QMRC"
FORMAT_VERSION = 1
MAX_NDIM = 8

_DTYPE_CODES = {
    np.dtype(np.float32): 0,
    np.dtype(np.float64): 1,
    np.dtype(np.complex64): 2,
    np.dtype(np.complex128): 3,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}


class FormatError(Exception):
    """Malformed or mismatched file content (CLI exit code 3)."""


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _encode_array(arr: np.ndarray) -> bytes:
    dtype = np.dtype(arr.dtype)
    if dtype not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype {dtype}; use f32/f64/c64/c128")
    if arr.ndim > MAX_NDIM:
        raise FormatError(f"too many dimensions ({arr.ndim} > {MAX_NDIM})")
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    head = struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def _decode_array(buf: bytes, offset: int, where: str) -> tuple[np.ndarray, int]:
    try:
        code, ndim = struct.unpack_from("<BB", buf, offset)
        offset += 2
        if code not in _CODE_DTYPES:
            raise FormatError(f"{where}: unknown dtype code {code}")
        if ndim > MAX_NDIM:
            raise FormatError(f"{where}: ndim {ndim} exceeds limit {MAX_NDIM}")
        dims = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(buf):
            raise FormatError(f"{where}: payload truncated "
                              f"(need {nbytes} bytes, have {len(buf) - offset})")
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(dims)
        return arr.copy(), offset + nbytes
    except struct.error as exc:
        raise FormatError(f"{where}: header truncated") from exc


def write_tensor(path, arr: np.ndarray) -> None:
    """Write an array as a QMRT tensor file (atomic replace)."""
    arr = np.asarray(arr)
    payload = TENSOR_MAGIC + struct.pack("<B", FORMAT_VERSION) + _encode_array(arr)
    _atomic_write(path, payload)


def read_tensor(path) -> np.ndarray:
    """Read a QMRT tensor file; raises FormatError on malformed content."""
    buf = Path(path).read_bytes()
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 5 or buf[4] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version")
    arr, offset = _decode_array(buf, 5, str(path))
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")
    return arr


def save_checkpoint(path, arrays: dict[str, np.ndarray], config_text: str) -> None:
    """Write named arrays plus the resolved config (and its hash) as QMRC."""
    config_bytes = config_text.encode()
    out = [CHECKPOINT_MAGIC, struct.pack("<B", FORMAT_VERSION),
           hashlib.sha256(config_bytes).digest(),
           struct.pack("<I", len(config_bytes)), config_bytes,
           struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        name_bytes = name.encode()
        out.append(struct.pack("<H", len(name_bytes)))
        out.append(name_bytes)
        out.append(_encode_array(np.asarray(arr)))
    _atomic_write(path, b"".join(out))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str, str]:
    """Read a QMRC checkpoint; returns (arrays, config_text, config_hash_hex)."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 45 or buf[4] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version")
    stored_hash = buf[5:37]
    (config_len,) = struct.unpack_from("<I", buf, 37)
    offset = 41
    config_bytes = buf[offset : offset + config_len]
    if len(config_bytes) != config_len:
        raise FormatError(f"{path}: config text truncated")
    if hashlib.sha256(config_bytes).digest() != stored_hash:
        raise FormatError(f"{path}: config hash does not match embedded config")
    offset += config_len
    (n_entries,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    arrays = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset : offset + name_len].decode()
        offset += name_len
        arrays[name], offset = _decode_array(buf, offset, f"{path}:{name}")
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")
    return arrays, config_bytes.decode(), stored_hash.hex()


def write_pgm(path, image: np.ndarray) -> None:
    """Export a real image as 8-bit binary PGM, max-normalized."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D image, got shape {image.shape}")
    peak = image.max(initial=0.0)
    scaled = image / peak if peak > 0 else image
    pixels = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
    _atomic_write(path, header + pixels.tobytes())


def parse_config_text(text: str) -> dict[str, str]:
    """Parse a key=value run-config file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
