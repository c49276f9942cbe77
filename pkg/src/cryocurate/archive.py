"""Browse, search, lazily read and download files from an EMPIAR-style archive.

Traversal uses the server's HTML directory listings (anchor hrefs; a
trailing slash marks a subdirectory). Entry metadata comes from the
``<entry>/<entry>.xml`` document; any element whose text is a path under
``data/`` is taken as a default directory, in document order.
"""

from __future__ import annotations

import fnmatch
import logging
import re
import threading
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import unquote, urlsplit

import requests

from .errors import (
    BadPattern,
    DecodeError,
    DirectoryNotFound,
    EntryNotFound,
    IndexOutOfRange,
    NoMatches,
    TransportError,
    XmlParseError,
)
from .imgformats import FileFormat, ImageArray, detect_format, read_mrc, read_npy

log = logging.getLogger(__name__)

DEFAULT_ARCHIVE_URL = "https://ftp.ebi.ac.uk/empiar/world_availability"


def _base_url(base_url=None) -> str:
    import os

    return (base_url or os.environ.get("CRYOCURATE_ARCHIVE_URL")
            or DEFAULT_ARCHIVE_URL).rstrip("/")


class _AnchorParser(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            for key, value in attrs:
                if key == "href" and value:
                    self.hrefs.append(value)


def _parse_listing(html: str) -> tuple[list[str], list[str]]:
    """Split an index page into (file names, subdirectory names)."""
    parser = _AnchorParser()
    parser.feed(html)
    files, dirs = [], []
    for href in parser.hrefs:
        if href.startswith(("?", "#")) or "://" in href or href.startswith("/"):
            continue
        name = unquote(href)
        if name in ("../", "./"):
            continue
        if name.endswith("/"):
            dirs.append(name.rstrip("/"))
        else:
            files.append(name)
    return sorted(set(files)), sorted(set(dirs))


def _get(url: str, session=None, timeout=60.0) -> requests.Response | None:
    session = session or requests
    try:
        response = session.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    if response.status_code == 404:
        return None
    if response.status_code >= 400:
        raise TransportError(f"HTTP {response.status_code} for {url}")
    return response


def _matcher(pattern: str, is_regex: bool):
    if is_regex:
        try:
            compiled = re.compile(pattern)
        except re.error as exc:
            raise BadPattern(f"invalid regex {pattern!r}: {exc}") from exc
        return lambda name: compiled.search(name) is not None
    try:
        re.compile(fnmatch.translate(pattern))
    except re.error as exc:
        raise BadPattern(f"invalid glob {pattern!r}: {exc}") from exc
    return lambda name: fnmatch.fnmatchcase(name, pattern)


# --- catalog ----------------------------------------------------------------

@dataclass
class EntryCatalog:
    entry_id: int
    xml_url: str
    default_directories: list[str]
    raw_metadata: ET.Element
    base_url: str

    def keys(self) -> list[str]:
        return list(self.default_directories)

    def __getitem__(self, directory: str) -> "ArchiveSource":
        return make_source(self.entry_id, directory, ".*", is_regex=True,
                           base_url=self.base_url)


def load_catalog(entry_id: int, base_url=None, session=None) -> EntryCatalog:
    base = _base_url(base_url)
    xml_url = f"{base}/{entry_id}/{entry_id}.xml"
    response = _get(xml_url, session)
    if response is None:
        raise EntryNotFound(f"entry {entry_id}: no XML at {xml_url}")
    try:
        root = ET.fromstring(response.content)
    except ET.ParseError as exc:
        raise XmlParseError(f"entry {entry_id}: {exc}") from exc
    directories = []
    for element in root.iter():
        text = (element.text or "").strip()
        if text == "data" or text.startswith("data/"):
            directories.append(text)
    return EntryCatalog(entry_id=int(entry_id), xml_url=xml_url,
                        default_directories=directories, raw_metadata=root,
                        base_url=base)


# --- search / save / download ----------------------------------------------

@dataclass
class SearchResult:
    matched_paths: list[str]
    subdirectories: list[str]


def _listing_url(base: str, entry_id: int, directory: str | None) -> str:
    url = f"{base}/{entry_id}/"
    if directory:
        url += directory.strip("/") + "/"
    return url


def _display_url(base: str, entry_id: int, directory: str | None, name: str = "") -> str:
    # reproduces the archive CLI convention of a doubled slash after the entry
    prefix = f"{base}/{entry_id}//"
    if directory:
        prefix += directory.strip("/") + "/"
    return prefix + name


def search(entry_id: int, directory: str | None = None, select: str = "*",
           is_regex: bool = False, base_url=None, session=None) -> SearchResult:
    base = _base_url(base_url)
    match = _matcher(select, is_regex)
    response = _get(_listing_url(base, entry_id, directory), session)
    if response is None:
        raise DirectoryNotFound(
            f"entry {entry_id}: directory {directory or '<root>'} not found")
    files, dirs = _parse_listing(response.text)
    matched = sorted([name for name in files if match(name)]
                     + [name + "/" for name in dirs if match(name)])
    searched = f"{base}/{entry_id}" + (f"//{directory.strip('/')}" if directory else "")
    subdirectories = [searched] + [
        _display_url(base, entry_id, directory, name) for name in dirs
    ]
    return SearchResult(
        matched_paths=[_display_url(base, entry_id, directory, name) for name in matched],
        subdirectories=subdirectories,
    )


def save_search(result: SearchResult, out_path) -> None:
    out_path = Path(out_path)
    if not result.matched_paths:
        log.warning("search produced no matches; writing empty URL list to %s", out_path)
    out_path.write_text("".join(url + "\n" for url in result.matched_paths),
                        encoding="utf-8")


@dataclass
class FileReport:
    url: str
    ok: bool
    size: int = 0
    error: str | None = None


@dataclass
class DownloadReport:
    files: list[FileReport] = field(default_factory=list)

    @property
    def ok_count(self) -> int:
        return sum(1 for f in self.files if f.ok)

    @property
    def failed(self) -> list[FileReport]:
        return [f for f in self.files if not f.ok]


def _normalize_url(url: str) -> str:
    parts = urlsplit(url)
    path = re.sub(r"/{2,}", "/", parts.path)
    return f"{parts.scheme}://{parts.netloc}{path}"


def download(url_list_path, save_dir, workers: int = 4, session=None) -> DownloadReport:
    urls = [line.strip() for line in Path(url_list_path).read_text().splitlines()
            if line.strip()]
    save_dir = Path(save_dir)
    save_dir.mkdir(parents=True, exist_ok=True)

    def fetch_one(url: str) -> FileReport:
        try:
            response = _get(_normalize_url(url), session)
            if response is None:
                return FileReport(url=url, ok=False, error="HTTP 404")
            name = unquote(urlsplit(url).path.rstrip("/").rsplit("/", 1)[-1])
            (save_dir / name).write_bytes(response.content)
            return FileReport(url=url, ok=True, size=len(response.content))
        except (TransportError, OSError) as exc:
            return FileReport(url=url, ok=False, error=str(exc))

    report = DownloadReport()
    if not urls:
        return report
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        report.files = list(pool.map(fetch_one, urls))
    return report


# --- lazy source ------------------------------------------------------------

class ArchiveSource:
    """Pattern-selected file collection in one archive directory.

    Construction performs a single listing request and no payload
    downloads; each ``read_partition`` call downloads exactly one file.
    """

    def __init__(self, entry_id: int, directory: str, filename_pattern: str = ".*",
                 is_regex: bool = True, base_url=None, session=None, cache: bool = False):
        self.entry_id = int(entry_id)
        self.directory = directory
        self.pattern = filename_pattern
        self.is_regex = is_regex
        self._base = _base_url(base_url)
        self._session = session
        self._cache: dict[str, bytes] | None = {} if cache else None
        self._counter_lock = threading.Lock()
        self.fetch_counter = 0

        match = _matcher(filename_pattern, is_regex)
        response = _get(_listing_url(self._base, self.entry_id, directory), session)
        if response is None:
            raise DirectoryNotFound(f"entry {entry_id}: directory {directory!r} not found")
        files, _dirs = _parse_listing(response.text)
        listing_url = _listing_url(self._base, self.entry_id, directory)
        self.matched_files = [listing_url + name for name in sorted(files) if match(name)]
        if not self.matched_files:
            raise NoMatches(
                f"entry {entry_id}: no file in {directory!r} matches {filename_pattern!r}")

    def __len__(self) -> int:
        return len(self.matched_files)

    def read_partition(self, index: int) -> ImageArray:
        if not 0 <= index < len(self.matched_files):
            raise IndexOutOfRange(
                f"partition {index} out of range [0, {len(self.matched_files)})")
        url = self.matched_files[index]
        if self._cache is not None and url in self._cache:
            payload = self._cache[url]
        else:
            response = _get(url, self._session)
            if response is None:
                raise TransportError(f"file vanished from server: {url}")
            with self._counter_lock:
                self.fetch_counter += 1
            payload = response.content
            if self._cache is not None:
                self._cache[url] = payload
        name = url.rsplit("/", 1)[-1]
        fmt = detect_format(payload, filename_hint=name)
        if fmt == FileFormat.MRC:
            _header, image = read_mrc(payload)
            return image
        if fmt == FileFormat.NPY:
            return read_npy(payload)
        raise DecodeError(f"{name}: payload is not a decodable image format ({fmt.value})")


def make_source(entry_id: int, directory: str, filename_pattern: str,
                is_regex: bool = False, base_url=None, session=None) -> ArchiveSource:
    return ArchiveSource(entry_id, directory, filename_pattern, is_regex,
                         base_url=base_url, session=session)
