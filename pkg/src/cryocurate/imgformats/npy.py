"""NPY v1.0 reader/writer (C-order, little-endian numeric dtypes only)."""

from __future__ import annotations

import ast
import struct

import numpy as np

from ..errors import BadNpyHeader, FortranOrderUnsupported, TruncatedData, UnsupportedDtype
from .image import ImageArray

MAGIC = b"\x93NUMPY"


def read_npy(data: bytes) -> ImageArray:
    if len(data) < 10 or data[:6] != MAGIC:
        raise BadNpyHeader("missing \\x93NUMPY magic")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise BadNpyHeader(f"unsupported NPY version {major}.{minor}")
    (header_len,) = struct.unpack("<H", data[8:10])
    header_end = 10 + header_len
    if len(data) < header_end:
        raise BadNpyHeader("truncated header")
    try:
        header = ast.literal_eval(data[10:header_end].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise BadNpyHeader(f"unparseable header dict: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise BadNpyHeader(f"unexpected header keys: {header!r}")
    if header["fortran_order"]:
        raise FortranOrderUnsupported("fortran_order=True arrays are not supported")
    descr = header["descr"]
    if not isinstance(descr, str) or descr[:1] not in ("<", "|"):
        raise BadNpyHeader(f"dtype descr {descr!r} is not little-endian numeric")
    try:
        dtype = np.dtype(descr)
    except TypeError as exc:
        raise BadNpyHeader(f"bad dtype descr {descr!r}") from exc
    if dtype.kind not in "iufb":
        raise BadNpyHeader(f"non-numeric dtype {descr!r}")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise BadNpyHeader(f"bad shape {shape!r}")

    count = int(np.prod(shape)) if shape else 1
    need = header_end + count * dtype.itemsize
    if len(data) < need:
        raise TruncatedData(f"NPY payload needs {need} bytes, has {len(data)}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=header_end)
    arr = np.ascontiguousarray(arr.astype(dtype.newbyteorder("="))).reshape(shape)
    return ImageArray(arr)


def write_npy(image: ImageArray | np.ndarray) -> bytes:
    arr = image.data if isinstance(image, ImageArray) else np.asarray(image)
    if arr.dtype.kind not in "iufb":
        raise UnsupportedDtype(f"cannot write dtype {arr.dtype}")
    arr = np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<" if arr.dtype.itemsize > 1 else "|")))
    descr = arr.dtype.str
    header = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, arr.shape)
    # pad so that data starts on a 64-byte boundary, terminated by newline
    unpadded = len(MAGIC) + 4 + len(header) + 1
    pad = (64 - unpadded % 64) % 64
    header = header + " " * pad + "\n"
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + arr.tobytes()
