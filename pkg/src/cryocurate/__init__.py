"""cryocurate: curation toolkit for cryoEM structure and image data.

Submodules:
  fetcher     - multi-database structure retrieval with caching and history
  structmodel - editable atomic models (PDB / mmCIF) with targeted deletions
  archive     - EMPIAR-style remote archive search, lazy reads and downloads
  imgformats  - MRC2014 / STAR / NPY codecs and format detection
  dataset     - labeled, transformed, split image datasets and batch export
  cli         - the `cryocurate` command line entry point
"""

from .fetcher import DatabaseId, Fetcher, FetchResult, FileType

__all__ = ["DatabaseId", "Fetcher", "FetchResult", "FileType"]
__version__ = "0.1.0"
