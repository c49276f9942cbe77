"""Container format codecs: MRC2014, STAR, NPY and byte-level detection."""

from .detect import FileFormat, detect_format
from .image import ImageArray
from .mrc import MrcHeader, read_mrc, write_mrc
from .npy import read_npy, write_npy
from .star import StarBlock, StarLoop, StarTable, read_star, write_star

__all__ = [
    "FileFormat",
    "ImageArray",
    "MrcHeader",
    "StarBlock",
    "StarLoop",
    "StarTable",
    "detect_format",
    "read_mrc",
    "read_npy",
    "read_star",
    "write_mrc",
    "write_npy",
    "write_star",
]
