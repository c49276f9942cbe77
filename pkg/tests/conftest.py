"""Shared fixtures: reference payload builders and an offline mock server.

The mock server replicates the public endpoints the package talks to:
a PDB download route, an AlphaFold model route, a UniProt REST route and
an EMPIAR-style archive tree served with HTML directory listings. Every
request is logged so tests can assert exact request counts.
"""

from __future__ import annotations

import json
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest


# --- independent reference builders (never use package serializers) ---------

def make_mrc_bytes(array: np.ndarray, big_endian: bool = False) -> bytes:
    """Reference MRC2014 writer used as fixture generator and oracle."""
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[None]
    order = ">" if big_endian else "<"
    modes = {"int8": 0, "int16": 1, "float32": 2, "uint16": 6, "float16": 12}
    mode = modes[arr.dtype.name]
    nz, ny, nx = arr.shape
    flat = arr.astype(np.float64)
    header = bytearray(1024)
    struct.pack_into(order + "10i", header, 0, nx, ny, nz, mode, 0, 0, 0, nx, ny, nz)
    struct.pack_into(order + "6f", header, 40, float(nx), float(ny), float(nz),
                     90.0, 90.0, 90.0)
    struct.pack_into(order + "3i", header, 64, 1, 2, 3)
    struct.pack_into(order + "3f", header, 76, float(flat.min()), float(flat.max()),
                     float(flat.mean()))
    struct.pack_into(order + "2i", header, 88, 0, 0)
    header[208:212] = b"MAP "
    header[212:216] = b"\x11\x11\x00\x00" if big_endian else b"\x44\x44\x00\x00"
    struct.pack_into(order + "f", header, 216, float(flat.std()))
    struct.pack_into(order + "i", header, 220, 0)
    swapped = arr.astype(arr.dtype.newbyteorder(order))
    return bytes(header) + swapped.tobytes()


def pdb_atom_line(serial, name, res_name, chain, res_seq, x, y, z,
                  element, hetero=False, occupancy=1.0, b=20.0) -> str:
    record = "HETATM" if hetero else "ATOM"
    name_field = name.ljust(4) if (len(name) == 4 or name[:1].isdigit()) \
        else (" " + name).ljust(4)
    return (f"{record:<6}{serial:>5} {name_field} {res_name:>3} {chain}"
            f"{res_seq:>4}    {x:8.3f}{y:8.3f}{z:8.3f}{occupancy:6.2f}{b:6.2f}"
            f"          {element:>2}")


def make_pdb_fixture() -> str:
    """50 ALA residues with hydrogens on 1-10, 3 waters and a 2-atom ligand."""
    lines = ["HEADER    TEST STRUCTURE"]
    serial = 1
    for res in range(1, 51):
        for name, element in (("N", "N"), ("CA", "C"), ("C", "C"), ("O", "O")):
            lines.append(pdb_atom_line(serial, name, "ALA", "A", res,
                                       res * 1.0, serial * 0.1, 0.0, element))
            serial += 1
        if res <= 10:
            lines.append(pdb_atom_line(serial, "H", "ALA", "A", res,
                                       res * 1.0, serial * 0.1, 1.0, "H"))
            serial += 1
    for i, res in enumerate((101, 102, 103)):
        lines.append(pdb_atom_line(serial, "O", "HOH", "A", res,
                                   60.0 + i, 0.0, 0.0, "O", hetero=True))
        serial += 1
    for i in range(2):
        lines.append(pdb_atom_line(serial, f"C{i + 1}", "LIG", "A", 200,
                                   70.0 + i, 0.0, 0.0, "C", hetero=True))
        serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


_CIF_ATOM_COLUMNS = """loop_
_atom_site.group_PDB
_atom_site.id
_atom_site.type_symbol
_atom_site.label_atom_id
_atom_site.label_alt_id
_atom_site.label_comp_id
_atom_site.auth_asym_id
_atom_site.auth_seq_id
_atom_site.pdbx_PDB_ins_code
_atom_site.Cartn_x
_atom_site.Cartn_y
_atom_site.Cartn_z
_atom_site.occupancy
_atom_site.B_iso_or_equiv
"""


def make_cif_fixture(block_name: str, n_residues: int = 3) -> str:
    rows = []
    serial = 1
    for res in range(1, n_residues + 1):
        for name, element in (("N", "N"), ("CA", "C"), ("C", "C")):
            rows.append(f"ATOM {serial} {element} {name} . ALA A {res} . "
                        f"{res:.3f} {serial * 0.5:.3f} 0.000 1.00 15.00")
            serial += 1
    rows.append(f"HETATM {serial} O O . HOH A 90 . 9.000 9.000 9.000 1.00 30.00")
    return (f"data_{block_name}\n#\n_entry.id   {block_name}\n#\n"
            + _CIF_ATOM_COLUMNS + "\n".join(rows) + "\n")


# --- mock server -------------------------------------------------------------

class MockState:
    def __init__(self, archive_root: Path):
        self.archive_root = archive_root
        self.pdb_files: dict[str, bytes] = {}
        self.af_files: dict[str, bytes] = {}
        self.uniprot: dict[str, dict] = {}
        self.lock = threading.Lock()
        self.requests: list[tuple[str, str]] = []
        self.fail_paths: set[str] = set()

    def reset(self):
        with self.lock:
            self.requests.clear()
        self.fail_paths.clear()

    def log(self, method, path):
        with self.lock:
            self.requests.append((method, path))


class MockHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _resolve(self):
        state: MockState = self.server.state
        path = self.path.split("?", 1)[0]
        while "//" in path:
            path = path.replace("//", "/")
        state.log(self.command, path)
        if path.startswith("/pdb/"):
            return state.pdb_files.get(path[len("/pdb/"):]), None
        if path.startswith("/af/"):
            return state.af_files.get(path[len("/af/"):]), None
        if path.startswith("/uniprot/uniprotkb/") and path.endswith(".json"):
            accession = path[len("/uniprot/uniprotkb/"):-len(".json")]
            entry = state.uniprot.get(accession)
            return (json.dumps(entry).encode() if entry is not None else None), None
        if path.startswith("/empiar/"):
            rel = path[len("/empiar/"):].rstrip("/")
            target = state.archive_root / rel if rel else state.archive_root
            if target.is_dir():
                entries = sorted(target.iterdir(), key=lambda p: p.name)
                anchors = ['<a href="../">../</a>']
                anchors += [
                    f'<a href="{p.name}/">{p.name}/</a>' if p.is_dir()
                    else f'<a href="{p.name}">{p.name}</a>'
                    for p in entries
                ]
                body = ("<html><body><h1>Index</h1>\n"
                        + "\n".join(anchors) + "\n</body></html>").encode()
                return body, "text/html"
            if target.is_file():
                return target.read_bytes(), None
            return None, None
        return None, None

    def _respond(self, send_body: bool):
        plain = self.path.split("?", 1)[0]
        while "//" in plain:
            plain = plain.replace("//", "/")
        if plain in self.server.state.fail_paths:
            self.server.state.log(self.command, plain)
            self.send_response(503)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        body, ctype = self._resolve()
        if body is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        self.send_response(200)
        self.send_header("Content-Type", ctype or "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if send_body:
            self.wfile.write(body)

    def do_GET(self):
        self._respond(send_body=True)

    def do_HEAD(self):
        self._respond(send_body=False)


class MockEnv:
    def __init__(self, server: ThreadingHTTPServer, state: MockState):
        self.server = server
        self.state = state
        host, port = server.server_address
        self.base = f"http://{host}:{port}"
        self.pdb_url = f"{self.base}/pdb"
        self.alphafold_url = f"{self.base}/af"
        self.uniprot_url = f"{self.base}/uniprot"
        self.archive_url = f"{self.base}/empiar"

    def requests(self, prefix: str = "") -> list[tuple[str, str]]:
        with self.state.lock:
            return [r for r in self.state.requests if r[1].startswith(prefix)]

    def archive_listing_requests(self):
        return [r for r in self.requests("/empiar/")
                if (self.state.archive_root / r[1][len("/empiar/"):].rstrip("/")).is_dir()
                or r[1].rstrip("/") == "/empiar"]

    def archive_payload_requests(self):
        return [r for r in self.requests("/empiar/")
                if (self.state.archive_root / r[1][len("/empiar/"):]).is_file()]


def _build_archive_tree(root: Path) -> None:
    # entry 10934: gain references alongside a micrograph, for search tests
    e = root / "10934"
    gain_dir = e / "data/CL44-1_20201106_111915/Images-Disc1/GridSquare_6089277/Data"
    gain_dir.mkdir(parents=True)
    (e / "10934.xml").write_text(
        "<entry><imageSet>"
        "<directory>data/CL44-1_20201106_111915/Images-Disc1/GridSquare_6089277/Data"
        "</directory></imageSet></entry>\n")
    (gain_dir / "aa_gain.tiff.bz2").write_bytes(b"BZh91AY-mock-gain-a")
    (gain_dir / "bb_gain.tiff.bz2").write_bytes(b"BZh91AY-mock-gain-b")
    (gain_dir / "mic_0001.mrc").write_bytes(
        make_mrc_bytes(np.arange(16, dtype=np.float32).reshape(4, 4)))

    # entry 10943: EER-named MRC stack for lazy partition reads
    e = root / "10943"
    eer_dir = e / "data/MotionCorr/job003/Tiff/EER/Images-Disc1/GridSquare_11149061/Data"
    eer_dir.mkdir(parents=True)
    (e / "10943.xml").write_text(
        "<entry><imageSet>"
        "<directory>data/MotionCorr/job003/Tiff/EER/Images-Disc1/"
        "GridSquare_11149061/Data</directory></imageSet></entry>\n")
    for k in range(12):
        img = np.full((4, 4), float(k), dtype=np.float32)
        (eer_dir / f"FoilHole_{k:04d}_EER.mrc").write_bytes(make_mrc_bytes(img))

    # entry 20001: 50-file directory for the laziness criterion
    e = root / "20001"
    lazy_dir = e / "data/lazy"
    lazy_dir.mkdir(parents=True)
    (e / "20001.xml").write_text("<entry><directory>data/lazy</directory></entry>\n")
    for k in range(50):
        img = np.full((2, 2), float(k), dtype=np.float32)
        (lazy_dir / f"img_{k:03d}.mrc").write_bytes(make_mrc_bytes(img))


def _populate_databases(state: MockState) -> None:
    pdb_fixture = make_pdb_fixture().encode()
    state.pdb_files = {
        "4V1W.cif": make_cif_fixture("4V1W").encode(),
        "4V1W.pdb": pdb_fixture,
        "7U6Q.cif": make_cif_fixture("7U6Q").encode(),
        "7U6Q.pdb": pdb_fixture,
        "1Q6U.pdb": pdb_fixture,
        "1ABC.cif": make_cif_fixture("1ABC").encode(),
    }
    state.af_files = {
        "AF-F4HVG8-F1-model_v4.cif": make_cif_fixture("AF-F4HVG8").encode(),
        "AF-A0A023FDY8-F1-model_v4.cif": make_cif_fixture("AF-A0A023FDY8").encode(),
    }
    state.uniprot = {
        "P45523": {
            "uniProtKBCrossReferences": [{"database": "PDB", "id": "1Q6U"}],
            "features": [{
                "type": "Signal",
                "location": {"start": {"value": 1}, "end": {"value": 25}},
            }],
        },
        "A0A023FDY8": {
            "uniProtKBCrossReferences": [{"database": "PDB", "id": "1ABC"}],
            "features": [],
        },
        "F4HVG8": {"uniProtKBCrossReferences": [], "features": []},
    }


@pytest.fixture(scope="session")
def mock_env(tmp_path_factory):
    archive_root = tmp_path_factory.mktemp("archive")
    _build_archive_tree(archive_root)
    state = MockState(archive_root)
    _populate_databases(state)
    server = ThreadingHTTPServer(("127.0.0.1", 0), MockHandler)
    server.state = state
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield MockEnv(server, state)
    server.shutdown()


@pytest.fixture
def server(mock_env):
    mock_env.state.reset()
    return mock_env


@pytest.fixture
def make_fetcher(server, tmp_path):
    from cryocurate.fetcher import Fetcher

    def factory(default_db="pdb", save_directory=None, **kwargs):
        kwargs.setdefault("retry_backoff", 0.0)
        kwargs.setdefault("retries", 2)
        return Fetcher(
            default_db,
            save_directory or tmp_path / "cache",
            pdb_url=server.pdb_url,
            alphafold_url=server.alphafold_url,
            uniprot_url=server.uniprot_url,
            **kwargs,
        )

    return factory
