"""Editable atomic model parsed from PDB fixed-column or mmCIF text.

Atoms are held as immutable records in file order; every non-atom line
(PDB) or non-atom_site category (mmCIF) is preserved opaquely so that
cleaning never destroys metadata. Deletion operations return new
structures and the original is never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidRange, MalformedStructure
from .imgformats.star import StarBlock, StarLoop, StarTable, read_star, write_star
from .errors import StarSyntaxError

WATER_RESIDUES = {"HOH", "WAT", "DOD"}
HYDROGEN_ELEMENTS = {"H", "D"}

_ATOM_SITE_PREFIX = "_atom_site."
_CANONICAL_ATOM_COLUMNS = [
    "group_PDB", "id", "type_symbol", "label_atom_id", "label_alt_id",
    "label_comp_id", "auth_asym_id", "auth_seq_id", "pdbx_PDB_ins_code",
    "Cartn_x", "Cartn_y", "Cartn_z", "occupancy", "B_iso_or_equiv",
]


@dataclass(frozen=True)
class AtomRecord:
    serial: int
    name: str
    alt_loc: str | None
    res_name: str
    chain_id: str
    res_seq: int
    insertion_code: str | None
    x: float
    y: float
    z: float
    occupancy: float
    b_factor: float
    element: str
    is_hetero: bool


def _element_from_name(name: str) -> str:
    stripped = "".join(c for c in name if not c.isdigit()).strip(" '\"*")
    if not stripped:
        return ""
    if stripped[0].upper() in HYDROGEN_ELEMENTS:
        return stripped[0].upper()
    return stripped[0].upper()


class Structure:
    """Parsed structure; format-specific internals, shared atom view."""

    def __init__(self, source_format, *, items=None, table=None, block_name=None,
                 loop_position=None, atoms=None):
        self.source_format = source_format  # "pdb" | "cif"
        self._items = items          # pdb: list of str (opaque) | AtomRecord
        self._table = table          # cif: StarTable with original non-atom content
        self._block_name = block_name
        self._loop_position = loop_position  # (block name, loop index) of atom_site
        self._atoms = atoms          # cif: list of AtomRecord

    @property
    def atoms(self) -> list[AtomRecord]:
        if self.source_format == "pdb":
            return [it for it in self._items if isinstance(it, AtomRecord)]
        return list(self._atoms)

    @property
    def data_block_name(self) -> str | None:
        return self._block_name if self.source_format == "cif" else None

    def filter_atoms(self, keep) -> "Structure":
        """New structure retaining only atoms for which ``keep(atom)`` is true."""
        if self.source_format == "pdb":
            items = [it for it in self._items
                     if not isinstance(it, AtomRecord) or keep(it)]
            return Structure("pdb", items=items)
        return Structure("cif", table=self._table, block_name=self._block_name,
                         loop_position=self._loop_position,
                         atoms=[a for a in self._atoms if keep(a)])

    def __eq__(self, other):
        if not isinstance(other, Structure):
            return NotImplemented
        return self.source_format == other.source_format and self.atoms == other.atoms


# --- parsing ---------------------------------------------------------------

def _parse_pdb_atom(line: str, lineno: int) -> AtomRecord:
    try:
        padded = line.ljust(80)
        element = padded[76:78].strip()
        name = padded[12:16].strip()
        occupancy = padded[54:60].strip()
        b_factor = padded[60:66].strip()
        return AtomRecord(
            serial=int(padded[6:11]),
            name=name,
            alt_loc=padded[16].strip() or None,
            res_name=padded[17:20].strip(),
            chain_id=padded[21].strip(),
            res_seq=int(padded[22:26]),
            insertion_code=padded[26].strip() or None,
            x=float(padded[30:38]),
            y=float(padded[38:46]),
            z=float(padded[46:54]),
            occupancy=float(occupancy) if occupancy else 1.0,
            b_factor=float(b_factor) if b_factor else 0.0,
            element=element or _element_from_name(name),
            is_hetero=padded.startswith("HETATM"),
        )
    except ValueError as exc:
        raise MalformedStructure(f"line {lineno}: bad atom record: {exc}") from exc


def _parse_pdb(text: str) -> Structure:
    items: list = []
    n_atoms = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith(("ATOM  ", "HETATM")):
            items.append(_parse_pdb_atom(line, lineno))
            n_atoms += 1
        else:
            items.append(line)
    if n_atoms == 0:
        raise MalformedStructure("no ATOM/HETATM records found")
    return Structure("pdb", items=items)


def _cif_value(row, columns, *names, default=None):
    for name in names:
        key = _ATOM_SITE_PREFIX + name
        if key in columns:
            value = row[columns.index(key)]
            if value in (".", "?"):
                return default
            return value
    return default


def _parse_cif(text: str) -> Structure:
    try:
        table = read_star(text)
    except StarSyntaxError as exc:
        raise MalformedStructure(f"bad mmCIF: {exc}") from exc
    loop_position = None
    for block in table.blocks.values():
        for li, loop in enumerate(block.loops):
            if any(c.startswith(_ATOM_SITE_PREFIX) for c in loop.columns):
                loop_position = (block.name, li)
                break
        if loop_position:
            break
    if loop_position is None:
        raise MalformedStructure("no atom_site loop found")
    block_name, loop_index = loop_position
    loop = table.blocks[block_name].loops[loop_index]
    columns = loop.columns
    atoms = []
    for ri, row in enumerate(loop.rows):
        try:
            name = _cif_value(row, columns, "auth_atom_id", "label_atom_id", default="") or ""
            element = _cif_value(row, columns, "type_symbol", default="")
            atoms.append(AtomRecord(
                serial=int(_cif_value(row, columns, "id", default=ri + 1)),
                name=name,
                alt_loc=_cif_value(row, columns, "label_alt_id", "auth_alt_id"),
                res_name=_cif_value(row, columns, "auth_comp_id", "label_comp_id", default="") or "",
                chain_id=_cif_value(row, columns, "auth_asym_id", "label_asym_id", default="") or "",
                res_seq=int(_cif_value(row, columns, "auth_seq_id", "label_seq_id", default=0)),
                insertion_code=_cif_value(row, columns, "pdbx_PDB_ins_code"),
                x=float(_cif_value(row, columns, "Cartn_x")),
                y=float(_cif_value(row, columns, "Cartn_y")),
                z=float(_cif_value(row, columns, "Cartn_z")),
                occupancy=float(_cif_value(row, columns, "occupancy", default=1.0)),
                b_factor=float(_cif_value(row, columns, "B_iso_or_equiv", default=0.0)),
                element=(element or _element_from_name(name)).upper(),
                is_hetero=(_cif_value(row, columns, "group_PDB", default="ATOM") == "HETATM"),
            ))
        except (TypeError, ValueError) as exc:
            raise MalformedStructure(f"atom_site row {ri}: {exc}") from exc
    return Structure("cif", table=table, block_name=block_name,
                     loop_position=loop_position, atoms=atoms)


def parse_structure(data: bytes | str, format_hint: str | None = None) -> Structure:
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    fmt = format_hint
    if fmt is None:
        head = text.lstrip()
        fmt = "cif" if (head.startswith("data_") or _ATOM_SITE_PREFIX in text) else "pdb"
    if fmt in ("cif", "mmcif"):
        return _parse_cif(text)
    if fmt == "pdb":
        return _parse_pdb(text)
    raise MalformedStructure(f"unknown format hint {format_hint!r}")


# --- deletion operations ---------------------------------------------------

def remove_hydrogens(structure: Structure) -> Structure:
    return structure.filter_atoms(lambda a: a.element.upper() not in HYDROGEN_ELEMENTS)


def remove_water(structure: Structure) -> Structure:
    return structure.filter_atoms(lambda a: a.res_name.upper() not in WATER_RESIDUES)


def remove_hetatoms(structure: Structure) -> Structure:
    return structure.filter_atoms(lambda a: not a.is_hetero)


def remove_residue_range(structure: Structure, start: int, end: int,
                         chain: str | None = None) -> Structure:
    if start > end:
        raise InvalidRange(f"start {start} > end {end}")

    def keep(atom: AtomRecord) -> bool:
        if chain is not None and atom.chain_id != chain:
            return True
        return not (start <= atom.res_seq <= end)

    return structure.filter_atoms(keep)


# --- serialization ----------------------------------------------------------

def _format_pdb_name(name: str) -> str:
    if len(name) >= 4:
        return name[:4]
    if name[:1].isdigit():
        return name.ljust(4)
    return (" " + name).ljust(4)


def _format_pdb_atom(atom: AtomRecord) -> str:
    record = "HETATM" if atom.is_hetero else "ATOM"
    return (
        f"{record:<6}{atom.serial:>5} {_format_pdb_name(atom.name)}"
        f"{atom.alt_loc or ' '}{atom.res_name:>3} {atom.chain_id:1}"
        f"{atom.res_seq:>4}{atom.insertion_code or ' '}   "
        f"{atom.x:8.3f}{atom.y:8.3f}{atom.z:8.3f}"
        f"{atom.occupancy:6.2f}{atom.b_factor:6.2f}          "
        f"{atom.element:>2}"
    )


def _atom_to_cif_row(atom: AtomRecord) -> tuple[str, ...]:
    return (
        "HETATM" if atom.is_hetero else "ATOM",
        str(atom.serial),
        atom.element or "?",
        atom.name or "?",
        atom.alt_loc or ".",
        atom.res_name or ".",
        atom.chain_id or ".",
        str(atom.res_seq),
        atom.insertion_code or ".",
        f"{atom.x:.3f}",
        f"{atom.y:.3f}",
        f"{atom.z:.3f}",
        f"{atom.occupancy:.2f}",
        f"{atom.b_factor:.2f}",
    )


def serialize(structure: Structure) -> bytes:
    if structure.source_format == "pdb":
        lines = [
            _format_pdb_atom(it) if isinstance(it, AtomRecord) else it
            for it in structure._items
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")

    atom_loop = StarLoop(
        columns=[_ATOM_SITE_PREFIX + c for c in _CANONICAL_ATOM_COLUMNS],
        rows=[_atom_to_cif_row(a) for a in structure._atoms],
    )
    block_name, loop_index = structure._loop_position
    blocks: dict[str, StarBlock] = {}
    for name, block in structure._table.blocks.items():
        loops = list(block.loops)
        if name == block_name:
            loops[loop_index] = atom_loop
        blocks[name] = StarBlock(name=name, pairs=dict(block.pairs), loops=loops)
    return write_star(StarTable(blocks)).encode("utf-8")
