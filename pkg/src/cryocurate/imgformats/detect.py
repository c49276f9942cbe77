"""Byte-level format detection for pipeline payloads."""

from __future__ import annotations

import enum

from .mrc import MAP_MAGIC
from .npy import MAGIC as NPY_MAGIC


class FileFormat(enum.Enum):
    MRC = "mrc"
    NPY = "npy"
    STAR = "star"
    OPAQUE = "opaque"


def detect_format(data: bytes, filename_hint: str | None = None) -> FileFormat:
    """Classify a payload; anything unrecognized (tiff.bz2 etc.) is OPAQUE."""
    if len(data) >= 212 and data[208:212] == MAP_MAGIC:
        return FileFormat.MRC
    if data.startswith(NPY_MAGIC):
        return FileFormat.NPY
    if filename_hint and filename_hint.lower().endswith(".star"):
        try:
            head = data[:4096].decode("utf-8")
        except UnicodeDecodeError:
            return FileFormat.OPAQUE
        for line in head.splitlines():
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if stripped.startswith(("data_", "loop_", "_")):
                return FileFormat.STAR
            break
    return FileFormat.OPAQUE
