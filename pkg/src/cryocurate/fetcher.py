"""Structure retrieval with PDB/AlphaFold fallback, caching and history.

The default database is tried first; on a miss the other database is
attempted. Payloads are cached under ``<save_directory>/<db>/`` with a
sidecar JSON index so that a repeated request performs zero network
operations. UniProt accessions are resolved to PDB entries through the
UniProt REST cross-reference service.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    NotFetched,
    NotFoundInAnyDatabase,
    TransportError,
    UnrecognizedIdFormat,
)
from . import structmodel

log = logging.getLogger(__name__)

DEFAULT_PDB_URL = "https://files.rcsb.org/download"
DEFAULT_ALPHAFOLD_URL = "https://alphafold.ebi.ac.uk/files"
DEFAULT_UNIPROT_URL = "https://rest.uniprot.org"

PDB_ID_RE = re.compile(r"^[0-9][A-Za-z0-9]{3}$")
UNIPROT_ACCESSION_RE = re.compile(
    r"^([OPQ][0-9][A-Z0-9]{3}[0-9]|[A-NR-Z][0-9]([A-Z][A-Z0-9]{2}[0-9]){1,2})$",
    re.IGNORECASE,
)

_INDEX_NAME = "cache_index.json"


class DatabaseId(str, enum.Enum):
    PDB = "pdb"
    ALPHAFOLD = "alphafold"


class FileType(str, enum.Enum):
    CIF = "cif"
    PDB_FORMAT = "pdb"
    ANY = "any"


@dataclass
class FetchResult:
    filename: str | None
    filedata: bytes
    source_db: DatabaseId
    actual_filetype: FileType


def _coerce_db(db) -> DatabaseId:
    return db if isinstance(db, DatabaseId) else DatabaseId(str(db).lower())


def _coerce_filetype(filetype) -> FileType:
    if filetype is None:
        return FileType.ANY
    return filetype if isinstance(filetype, FileType) else FileType(str(filetype).lower())


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Fetcher:
    """Unified retrieval of structure files by PDB ID or UniProt accession."""

    def __init__(self, default_db="pdb", save_directory=".", *,
                 pdb_url=None, alphafold_url=None, uniprot_url=None,
                 timeout=30.0, retries=3, retry_backoff=0.5, session=None):
        self.default_db = _coerce_db(default_db)
        self.pdb_url = (pdb_url or os.environ.get("CRYOCURATE_PDB_URL")
                        or DEFAULT_PDB_URL).rstrip("/")
        self.alphafold_url = (alphafold_url or os.environ.get("CRYOCURATE_ALPHAFOLD_URL")
                              or DEFAULT_ALPHAFOLD_URL).rstrip("/")
        self.uniprot_url = (uniprot_url or os.environ.get("CRYOCURATE_UNIPROT_URL")
                            or DEFAULT_UNIPROT_URL).rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.retry_backoff = retry_backoff
        self.session = session or requests.Session()
        self._history: dict[str, list[str]] = {}
        self._xref_cache: dict[str, list[str]] = {}
        self.save_directory: Path = Path(".")
        self.set_directory(save_directory)

    # -- configuration ------------------------------------------------------

    def set_default_db(self, db) -> None:
        self.default_db = _coerce_db(db)

    def set_directory(self, path) -> None:
        directory = Path(path).expanduser()
        try:
            directory.mkdir(parents=True, exist_ok=True)
            probe = directory / ".write-probe"
            probe.touch()
            probe.unlink()
        except OSError as exc:
            raise PermissionError(f"directory {directory} is not usable: {exc}") from exc
        self.save_directory = directory

    # -- HTTP ----------------------------------------------------------------

    def _request(self, url: str, method: str = "GET"):
        """GET/HEAD with bounded retries; returns the response, or None on 404."""
        last_error = None
        for attempt in range(self.retries):
            if attempt and self.retry_backoff:
                time.sleep(self.retry_backoff * (2 ** (attempt - 1)))
            try:
                response = self.session.request(method, url, timeout=self.timeout,
                                                allow_redirects=True)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code == 404:
                return None
            if response.status_code >= 500:
                last_error = RuntimeError(f"HTTP {response.status_code} for {url}")
                continue
            if response.status_code >= 400:
                raise TransportError(f"HTTP {response.status_code} for {url}")
            return response
        raise TransportError(f"request to {url} failed after {self.retries} attempts: {last_error}")

    # -- identifier handling -------------------------------------------------

    @staticmethod
    def _classify(identifier: str) -> str:
        identifier = identifier.strip()
        if PDB_ID_RE.match(identifier):
            return "pdb_id"
        if UNIPROT_ACCESSION_RE.match(identifier):
            return "uniprot"
        raise UnrecognizedIdFormat(f"{identifier!r} is neither a PDB ID nor a UniProt accession")

    def _uniprot_entry(self, accession: str) -> dict | None:
        url = f"{self.uniprot_url}/uniprotkb/{accession.upper()}.json"
        response = self._request(url)
        if response is None:
            return None
        try:
            return response.json()
        except ValueError as exc:
            raise TransportError(f"unparseable UniProt response for {accession}: {exc}") from exc

    def _pdb_xrefs(self, accession: str) -> list[str]:
        accession = accession.upper()
        if accession not in self._xref_cache:
            entry = self._uniprot_entry(accession)
            xrefs = []
            if entry:
                for ref in entry.get("uniProtKBCrossReferences", []):
                    if ref.get("database") == "PDB" and ref.get("id"):
                        xrefs.append(ref["id"].upper())
            self._xref_cache[accession] = xrefs
        return self._xref_cache[accession]

    def resolve_id(self, identifier: str):
        """Map an identifier to the (database, canonical id) pairs hosting it."""
        kind = self._classify(identifier)
        if kind == "pdb_id":
            return [(DatabaseId.PDB, identifier.upper())]
        accession = identifier.upper()
        alphafold = [(DatabaseId.ALPHAFOLD, accession)]
        pdb = [(DatabaseId.PDB, xref) for xref in self._pdb_xrefs(accession)]
        if self.default_db == DatabaseId.PDB:
            return pdb + alphafold
        return alphafold + pdb

    # -- fetch core ----------------------------------------------------------

    def _candidate_urls(self, db: DatabaseId, identifier: str, filetype: FileType):
        """Yield (url, actual_filetype, canonical_id) in preference order."""
        if filetype == FileType.PDB_FORMAT:
            exts = [FileType.PDB_FORMAT, FileType.CIF]
        else:
            # explicit cif, or ANY: cif preferred
            exts = [FileType.CIF, FileType.PDB_FORMAT]
        kind = self._classify(identifier)
        if db == DatabaseId.PDB:
            if kind == "pdb_id":
                pdb_ids = [identifier.upper()]
            else:
                pdb_ids = self._pdb_xrefs(identifier)
            for pdb_id in pdb_ids:
                for ext in exts:
                    yield f"{self.pdb_url}/{pdb_id}.{ext.value}", ext, pdb_id
        else:
            if kind != "uniprot":
                return
            accession = identifier.upper()
            for ext in exts:
                yield (f"{self.alphafold_url}/AF-{accession}-F1-model_v4.{ext.value}",
                       ext, accession)

    def _try_download(self, db: DatabaseId, identifier: str, filetype: FileType):
        for url, ext, canonical in self._candidate_urls(db, identifier, filetype):
            response = self._request(url)
            if response is not None:
                return response.content, ext, canonical
        return None

    def _probe(self, db: DatabaseId, identifier: str) -> bool:
        for url, _ext, _canonical in self._candidate_urls(db, identifier, FileType.ANY):
            if self._request(url, method="HEAD") is not None:
                return True
        return False

    def _local_filename(self, identifier: str, canonical: str, db: DatabaseId,
                        filetype: FileType) -> str:
        identifier = identifier.strip().lower()
        canonical = canonical.lower()
        if db == DatabaseId.PDB and identifier != canonical:
            # accession resolved through a PDB cross-reference
            stem = f"{identifier}_{canonical}"
        else:
            stem = identifier
        return f"{stem}.{filetype.value}"

    # -- cache ---------------------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.save_directory / _INDEX_NAME

    def _load_index(self) -> list[dict]:
        try:
            return json.loads(self._index_path.read_text())
        except (OSError, ValueError):
            return []

    def _store_index_entry(self, entry: dict) -> None:
        entries = [e for e in self._load_index()
                   if not (e["id"] == entry["id"] and e["requested"] == entry["requested"])]
        entries.append(entry)
        _atomic_write(self._index_path, json.dumps(entries, indent=1).encode())

    def _cache_lookup(self, normalized_id: str, filetype: FileType) -> dict | None:
        entries = [e for e in self._load_index() if e["id"] == normalized_id]
        live = [e for e in entries if (self.save_directory / e["path"]).exists()]
        if filetype == FileType.ANY:
            for want in (FileType.CIF.value, FileType.PDB_FORMAT.value):
                for entry in live:
                    if entry["actual"] == want:
                        return entry
            return None
        for entry in live:
            if entry["actual"] == filetype.value or entry["requested"] == filetype.value:
                return entry
        return None

    # -- public API ----------------------------------------------------------

    def get_file(self, identifier: str, filetype="any", filesave: bool = False,
                 db=None) -> FetchResult:
        if not identifier or not identifier.strip():
            raise UnrecognizedIdFormat("empty identifier")
        identifier = identifier.strip()
        filetype = _coerce_filetype(filetype)
        first_db = _coerce_db(db) if db is not None else self.default_db
        other_db = (DatabaseId.ALPHAFOLD if first_db == DatabaseId.PDB else DatabaseId.PDB)
        self._classify(identifier)
        normalized = identifier.upper()

        cached = self._cache_lookup(normalized, filetype)
        if cached is not None:
            filedata = (self.save_directory / cached["path"]).read_bytes()
            source_db = DatabaseId(cached["db"])
            self._history.setdefault(identifier, [source_db.value])
            filename = cached["filename"]
            if filesave:
                _atomic_write(self.save_directory / filename, filedata)
            return FetchResult(filename if filesave else None, filedata,
                               source_db, FileType(cached["actual"]))

        found_dbs: list[str] = []
        payload = None
        source_db = None
        for candidate in (first_db, other_db):
            if payload is None:
                result = self._try_download(candidate, identifier, filetype)
                if result is not None:
                    payload = result
                    source_db = candidate
                    found_dbs.append(candidate.value)
            elif self._probe(candidate, identifier):
                found_dbs.append(candidate.value)
        if payload is None:
            raise NotFoundInAnyDatabase(
                f"{identifier} not found in PDB or AlphaFold databases")

        filedata, actual, canonical = payload
        # history records every database hosting the id, in default-first order
        order = {DatabaseId.PDB.value: 0, DatabaseId.ALPHAFOLD.value: 1}
        found_dbs.sort(key=lambda v: order[v] if first_db == DatabaseId.PDB else 1 - order[v])
        self._history[identifier] = found_dbs

        filename = self._local_filename(identifier, canonical, source_db, actual)
        cache_dir = self.save_directory / source_db.value
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = cache_dir / filename
        _atomic_write(cache_path, filedata)
        self._store_index_entry({
            "id": normalized,
            "requested": filetype.value,
            "actual": actual.value,
            "db": source_db.value,
            "filename": filename,
            "path": str(cache_path.relative_to(self.save_directory)),
        })
        if filesave:
            _atomic_write(self.save_directory / filename, filedata)
        return FetchResult(filename if filesave else None, filedata, source_db, actual)

    def search_history(self) -> dict[str, list[str]]:
        return {key: list(value) for key, value in self._history.items()}

    def fetch_signal_peptide_range(self, accession: str):
        """Annotated signal-peptide interval from UniProt, or None."""
        if not UNIPROT_ACCESSION_RE.match(accession.strip()):
            raise UnrecognizedIdFormat(f"{accession!r} is not a UniProt accession")
        entry = self._uniprot_entry(accession.strip())
        if not entry:
            return None
        for feature in entry.get("features", []):
            if str(feature.get("type", "")).upper() == "SIGNAL":
                location = feature.get("location", {})
                try:
                    start = int(location.get("start", {}).get("value", feature.get("begin")))
                    end = int(location.get("end", {}).get("value", feature.get("end")))
                except (TypeError, ValueError):
                    continue
                return (start, end)
        return None

    def remove(self, identifier: str, signal_peptides: bool = False,
               hydrogens: bool = False, water: bool = False, hetatoms: bool = False,
               output_filename: str | None = None) -> Path:
        """Clean a previously fetched structure and write it next to the cache."""
        identifier = identifier.strip()
        normalized = identifier.upper()
        cached = (self._cache_lookup(normalized, FileType.PDB_FORMAT)
                  or self._cache_lookup(normalized, FileType.ANY))
        if cached is None:
            raise NotFetched(f"{identifier} has not been fetched; call get_file first")
        source_path = self.save_directory / cached["path"]
        structure = structmodel.parse_structure(
            source_path.read_bytes(),
            format_hint="cif" if cached["actual"] == "cif" else "pdb")

        suffixes = []
        if signal_peptides:
            signal_range = None
            if UNIPROT_ACCESSION_RE.match(identifier):
                signal_range = self.fetch_signal_peptide_range(identifier)
            if signal_range is None:
                log.warning("no signal peptide annotation for %s; option skipped", identifier)
            else:
                start, end = signal_range
                structure = structmodel.remove_residue_range(structure, start, end)
                suffixes.append(f"nosignal{start}to{end}")
        if hydrogens:
            structure = structmodel.remove_hydrogens(structure)
            suffixes.append("nohydrogens")
        if water:
            structure = structmodel.remove_water(structure)
            suffixes.append("nowater")
        if hetatoms:
            structure = structmodel.remove_hetatoms(structure)
            suffixes.append("nohetatm")

        if output_filename is not None:
            out_path = self.save_directory / output_filename
        else:
            stem, ext = os.path.splitext(cached["filename"])
            parts = [stem] + suffixes
            out_path = self.save_directory / ("_".join(parts) + ext)
        _atomic_write(out_path, structmodel.serialize(structure))
        return out_path
