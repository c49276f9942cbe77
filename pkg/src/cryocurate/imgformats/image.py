"""Decoded image payload container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ImageArray:
    """Numeric image buffer with optional voxel size in ångström per axis.

    ``data`` is kept in native byte order, shape ``(nz, ny, nx)`` for
    volumes/stacks or ``(ny, nx)`` for plain 2D images.
    """

    data: np.ndarray
    voxel_size: tuple[float, ...] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageArray):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
            and self.voxel_size == other.voxel_size
        )
