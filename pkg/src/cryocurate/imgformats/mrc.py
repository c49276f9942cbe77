"""MRC2014 reader/writer.

Only the 1024-byte main header plus raw data section are interpreted.
Extended headers are skipped on read (length taken from ``nsymbt``) and
preserved opaquely. Data is exposed as ``(nz, ny, nx)``; the axis-order
words (mapc/mapr/maps) are stored but never used to permute the array.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadMagic, TruncatedData, UnsupportedDtype, UnsupportedMode
from .image import ImageArray

HEADER_SIZE = 1024
MAP_MAGIC = b"MAP "
LITTLE_ENDIAN_STAMP = b"\x44\x44\x00\x00"
BIG_ENDIAN_STAMP = b"\x11\x11\x00\x00"

# mode -> numpy dtype character (without byte order)
MODE_DTYPES = {
    0: "i1",
    1: "i2",
    2: "f4",
    6: "u2",
    12: "f2",
}
DTYPE_MODES = {np.dtype(c): m for m, c in MODE_DTYPES.items()}


@dataclass
class MrcHeader:
    nx: int
    ny: int
    nz: int
    mode: int
    nxstart: int = 0
    nystart: int = 0
    nzstart: int = 0
    mx: int = 0
    my: int = 0
    mz: int = 0
    cella: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cellb: tuple[float, float, float] = (90.0, 90.0, 90.0)
    mapc: int = 1
    mapr: int = 2
    maps: int = 3
    dmin: float = 0.0
    dmax: float = 0.0
    dmean: float = 0.0
    ispg: int = 0
    nsymbt: int = 0
    extra: bytes = b"\x00" * 100
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    map_magic: bytes = MAP_MAGIC
    machine_stamp: bytes = LITTLE_ENDIAN_STAMP
    rms: float = 0.0
    nlabl: int = 0
    labels: list[str] = field(default_factory=list)

    @property
    def element_size(self) -> int:
        return np.dtype(MODE_DTYPES[self.mode]).itemsize

    @property
    def voxel_size(self) -> tuple[float, ...] | None:
        if self.mx > 0 and self.my > 0 and self.mz > 0:
            return (
                self.cella[0] / self.mx,
                self.cella[1] / self.my,
                self.cella[2] / self.mz,
            )
        return None


def _byte_order(stamp: bytes) -> str:
    return ">" if stamp[:1] == b"\x11" else "<"


def read_mrc(data: bytes) -> tuple[MrcHeader, ImageArray]:
    if len(data) < HEADER_SIZE:
        raise TruncatedData(f"payload is {len(data)} bytes, header needs {HEADER_SIZE}")
    if data[208:212] != MAP_MAGIC:
        raise BadMagic(f"missing 'MAP ' magic at byte 208, got {data[208:212]!r}")
    order = _byte_order(data[212:216])

    ints = struct.unpack(order + "10i", data[0:40])
    cells = struct.unpack(order + "6f", data[40:64])
    axes = struct.unpack(order + "3i", data[64:76])
    stats = struct.unpack(order + "3f", data[76:88])
    ispg, nsymbt = struct.unpack(order + "2i", data[88:96])
    origin = struct.unpack(order + "3f", data[196:208])
    (rms,) = struct.unpack(order + "f", data[216:220])
    (nlabl,) = struct.unpack(order + "i", data[220:224])

    header = MrcHeader(
        nx=ints[0], ny=ints[1], nz=ints[2], mode=ints[3],
        nxstart=ints[4], nystart=ints[5], nzstart=ints[6],
        mx=ints[7], my=ints[8], mz=ints[9],
        cella=cells[0:3], cellb=cells[3:6],
        mapc=axes[0], mapr=axes[1], maps=axes[2],
        dmin=stats[0], dmax=stats[1], dmean=stats[2],
        ispg=ispg, nsymbt=nsymbt,
        extra=data[96:196],
        origin=origin,
        map_magic=data[208:212],
        machine_stamp=data[212:216],
        rms=rms,
        nlabl=nlabl,
        labels=[
            data[224 + 80 * i:224 + 80 * (i + 1)].decode("ascii", "replace").rstrip("\x00 ")
            for i in range(max(0, min(nlabl, 10)))
        ],
    )

    if header.mode not in MODE_DTYPES:
        raise UnsupportedMode(f"MRC mode {header.mode} is not supported")
    if header.nx <= 0 or header.ny <= 0 or header.nz <= 0:
        raise TruncatedData(f"non-positive dimensions {header.nx}x{header.ny}x{header.nz}")
    if header.nsymbt < 0:
        raise TruncatedData(f"negative extended header size {header.nsymbt}")

    n_elems = header.nx * header.ny * header.nz
    offset = HEADER_SIZE + header.nsymbt
    need = offset + n_elems * header.element_size
    if len(data) < need:
        raise TruncatedData(f"declared data needs {need} bytes, payload has {len(data)}")

    dtype = np.dtype(order + MODE_DTYPES[header.mode])
    arr = np.frombuffer(data, dtype=dtype, count=n_elems, offset=offset)
    arr = np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("=")))
    arr = arr.reshape(header.nz, header.ny, header.nx)
    return header, ImageArray(arr, voxel_size=header.voxel_size)


def write_mrc(image: ImageArray | np.ndarray, voxel_size: tuple[float, ...] | None = None) -> bytes:
    if isinstance(image, ImageArray):
        if voxel_size is None:
            voxel_size = image.voxel_size
        arr = image.data
    else:
        arr = np.asarray(image)

    if arr.size == 0:
        raise UnsupportedDtype("cannot write an empty array")
    if arr.ndim == 2:
        arr = arr[np.newaxis, :, :]
    if arr.ndim != 3:
        raise UnsupportedDtype(f"expected 2D or 3D data, got {arr.ndim}D")

    # half floats are promoted; portability of mode 12 writers varies
    if arr.dtype == np.float16:
        arr = arr.astype(np.float32)
    native = arr.dtype.newbyteorder("=")
    if np.dtype(native) not in DTYPE_MODES:
        raise UnsupportedDtype(f"dtype {arr.dtype} has no MRC mode")
    mode = DTYPE_MODES[np.dtype(native)]
    arr = np.ascontiguousarray(arr.astype(np.dtype("<" + MODE_DTYPES[mode])))

    nz, ny, nx = arr.shape
    as_f64 = arr.astype(np.float64)
    dmin = float(as_f64.min())
    dmax = float(as_f64.max())
    dmean = float(as_f64.mean())
    rms = float(as_f64.std())

    if voxel_size is None:
        cella = (0.0, 0.0, 0.0)
    else:
        vx, vy, vz = (tuple(voxel_size) * 3)[:3] if len(voxel_size) < 3 else voxel_size
        cella = (vx * nx, vy * ny, vz * nz)

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<10i", header, 0, nx, ny, nz, mode, 0, 0, 0, nx, ny, nz)
    struct.pack_into("<6f", header, 40, *cella, 90.0, 90.0, 90.0)
    struct.pack_into("<3i", header, 64, 1, 2, 3)
    struct.pack_into("<3f", header, 76, dmin, dmax, dmean)
    struct.pack_into("<2i", header, 88, 0, 0)
    struct.pack_into("<3f", header, 196, 0.0, 0.0, 0.0)
    header[208:212] = MAP_MAGIC
    header[212:216] = LITTLE_ENDIAN_STAMP
    struct.pack_into("<f", header, 216, rms)
    struct.pack_into("<i", header, 220, 0)
    return bytes(header) + arr.tobytes()
