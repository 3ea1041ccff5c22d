"""Reader and writer for the NPY v1.0 subset used as interchange format.

Supported: little-endian C-order arrays of int32, int64, float32 or float64
with one to four dimensions.
"""
from __future__ import annotations

import ast
import os
import struct

import numpy as np

from .errors import InputError

MAGIC = b"\x93NUMPY"
SUPPORTED_DESCR = {"<i4": np.int32, "<i8": np.int64, "<f4": np.float32, "<f8": np.float64}
_ALIGN = 64


class NpyFormatError(InputError):
    pass


def _parse_header(text: str, path) -> tuple[np.dtype, tuple[int, ...]]:
    try:
        header = ast.literal_eval(text)
    except (ValueError, SyntaxError) as e:
        raise NpyFormatError(f"{path}: malformed header: {e}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"{path}: malformed header {text.strip()!r}")
    if header["fortran_order"] is not False:
        raise NpyFormatError(f"{path}: unsupported order (fortran_order={header['fortran_order']!r})")
    descr = header["descr"]
    if descr not in SUPPORTED_DESCR:
        raise NpyFormatError(
            f"{path}: unsupported dtype {descr!r}; expected one of {sorted(SUPPORTED_DESCR)}"
        )
    shape = header["shape"]
    if (not isinstance(shape, tuple) or not 1 <= len(shape) <= 4
            or not all(isinstance(s, int) and s >= 0 for s in shape)):
        raise NpyFormatError(f"{path}: unsupported shape {shape!r}; need 1 to 4 dimensions")
    return np.dtype(SUPPORTED_DESCR[descr]).newbyteorder("<"), shape


def load_array(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:6] != MAGIC:
        raise NpyFormatError(f"{path}: not an NPY file (bad magic)")
    if len(data) < 10:
        raise NpyFormatError(f"{path}: truncated header")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise NpyFormatError(f"{path}: unsupported NPY version {major}.{minor}; need 1.0")
    (hlen,) = struct.unpack("<H", data[8:10])
    start = 10 + hlen
    if len(data) < start:
        raise NpyFormatError(f"{path}: truncated header")
    try:
        text = data[10:start].decode("latin1")
    except UnicodeDecodeError:
        raise NpyFormatError(f"{path}: header is not text") from None
    dtype, shape = _parse_header(text, path)
    count = int(np.prod(shape, dtype=np.int64))
    need = count * dtype.itemsize
    if len(data) - start < need:
        raise NpyFormatError(
            f"{path}: truncated payload ({len(data) - start} of {need} bytes)"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    return arr.reshape(shape).copy() if count else np.zeros(shape, dtype=dtype)


def _descr(arr: np.ndarray) -> str:
    for descr, t in SUPPORTED_DESCR.items():
        if arr.dtype == np.dtype(t):
            return descr
    raise NpyFormatError(f"cannot write dtype {arr.dtype}; expected int32/int64/float32/float64")


def save_array(path: str | os.PathLike, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.int32)
    if not 1 <= arr.ndim <= 4:
        raise NpyFormatError(f"cannot write a {arr.ndim}-dimensional array; need 1 to 4")
    descr = _descr(arr)
    arr = np.ascontiguousarray(arr, dtype=np.dtype(descr))
    shape = repr(tuple(int(s) for s in arr.shape))
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, shape)
    pad = -(10 + len(text) + 1) % _ALIGN
    header = (text + " " * pad + "\n").encode("latin1")
    with open(path, "wb") as f:
        f.write(MAGIC + b"\x01\x00" + struct.pack("<H", len(header)))
        f.write(header)
        f.write(arr.tobytes(order="C"))
