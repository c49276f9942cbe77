"""STAR text grammar: data blocks, key-value pairs and loop tables.

Values are kept as strings at the grammar level; numeric interpretation
happens in the typed accessors. Multi-line semicolon text values are
supported for key-value pairs (not inside loop rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import StarSyntaxError

_QUOTES = "'\""
_NEEDS_QUOTE_PREFIXES = ("_", "$", "#", ";", "'", '"')


def _split_tokens(line: str, lineno: int) -> list[str]:
    """Split one line into tokens honoring quotes; unquoted # starts a comment."""
    tokens: list[str] = []
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c.isspace():
            i += 1
            continue
        if c == "#":
            break
        if c in _QUOTES:
            j = line.find(c, i + 1)
            if j < 0:
                raise StarSyntaxError(f"unterminated quote {c}", lineno)
            tokens.append(line[i + 1:j])
            i = j + 1
            if i < n and not line[i].isspace():
                raise StarSyntaxError("quoted value not followed by whitespace", lineno)
        else:
            j = i
            while j < n and not line[j].isspace():
                j += 1
            tokens.append(line[i:j])
            i = j
    return tokens


@dataclass
class StarLoop:
    columns: list[str]
    rows: list[tuple[str, ...]]

    def column(self, name: str) -> list[str]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def get_int(self, row: int, name: str) -> int:
        return int(self.rows[row][self.columns.index(name)])

    def get_float(self, row: int, name: str) -> float:
        return float(self.rows[row][self.columns.index(name)])


@dataclass
class StarBlock:
    name: str
    pairs: dict[str, str] = field(default_factory=dict)
    loops: list[StarLoop] = field(default_factory=list)

    def get_int(self, key: str) -> int:
        return int(self.pairs[key])

    def get_float(self, key: str) -> float:
        return float(self.pairs[key])


@dataclass
class StarTable:
    blocks: dict[str, StarBlock] = field(default_factory=dict)

    def __getitem__(self, name: str) -> StarBlock:
        return self.blocks[name]

    @property
    def first_block(self) -> StarBlock:
        return next(iter(self.blocks.values()))


def read_star(text: str) -> StarTable:
    lines = text.splitlines()
    table = StarTable()
    block: StarBlock | None = None
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        if stripped.startswith("data_"):
            block = StarBlock(stripped[len("data_"):])
            table.blocks[block.name] = block
            i += 1
            continue
        if block is None:
            raise StarSyntaxError(f"content before any data_ block: {stripped[:30]!r}", i + 1)
        if stripped == "loop_":
            i += 1
            columns: list[str] = []
            while i < len(lines) and lines[i].strip().startswith("_"):
                tokens = _split_tokens(lines[i], i + 1)
                if len(tokens) != 1:
                    raise StarSyntaxError("loop column line must hold exactly one tag", i + 1)
                columns.append(tokens[0])
                i += 1
            if not columns:
                raise StarSyntaxError("loop_ with no columns", i + 1)
            rows: list[tuple[str, ...]] = []
            while i < len(lines):
                s = lines[i].strip()
                if not s or s.startswith(("data_", "_")) or s == "loop_":
                    break
                if s.startswith("#"):
                    i += 1
                    continue
                if s.startswith(";"):
                    raise StarSyntaxError("semicolon text values inside loops are not supported", i + 1)
                tokens = _split_tokens(lines[i], i + 1)
                if len(tokens) != len(columns):
                    raise StarSyntaxError(
                        f"loop row has {len(tokens)} values for {len(columns)} columns", i + 1
                    )
                rows.append(tuple(tokens))
                i += 1
            block.loops.append(StarLoop(columns, rows))
            continue
        if stripped.startswith("_"):
            tokens = _split_tokens(lines[i], i + 1)
            key = tokens[0]
            if len(tokens) == 2:
                block.pairs[key] = tokens[1]
                i += 1
                continue
            if len(tokens) > 2:
                raise StarSyntaxError(f"too many values for {key}", i + 1)
            # value on the following line: semicolon text block or bare token
            i += 1
            if i >= len(lines):
                raise StarSyntaxError(f"missing value for {key}", i)
            if lines[i].startswith(";"):
                parts = [lines[i][1:]]
                i += 1
                while i < len(lines) and not lines[i].startswith(";"):
                    parts.append(lines[i])
                    i += 1
                if i >= len(lines):
                    raise StarSyntaxError(f"unterminated text block for {key}", i)
                i += 1
                if parts and parts[0] == "":
                    parts = parts[1:]
                block.pairs[key] = "\n".join(parts)
            else:
                tokens = _split_tokens(lines[i], i + 1)
                if len(tokens) != 1:
                    raise StarSyntaxError(f"expected single value for {key}", i + 1)
                block.pairs[key] = tokens[0]
                i += 1
            continue
        raise StarSyntaxError(f"unexpected content: {stripped[:30]!r}", i + 1)
    return table


def _format_value(value: str) -> str:
    if value == "" or any(ch.isspace() for ch in value) or value.startswith(_NEEDS_QUOTE_PREFIXES) \
            or value.startswith(("data_", "loop_")):
        if '"' not in value:
            return f'"{value}"'
        if "'" not in value:
            return f"'{value}'"
        raise StarSyntaxError(f"value not representable on one line: {value!r}")
    return value


def write_star(table: StarTable) -> str:
    out: list[str] = []
    for block in table.blocks.values():
        out.append(f"data_{block.name}")
        out.append("")
        for key, value in block.pairs.items():
            if "\n" in value:
                out.extend([key, ";", value, ";"])
            else:
                out.append(f"{key:<35} {_format_value(value)}")
        if block.pairs:
            out.append("")
        for loop in block.loops:
            out.append("loop_")
            out.extend(loop.columns)
            for row in loop.rows:
                out.append(" ".join(_format_value(v) for v in row))
            out.append("")
    return "\n".join(out) + ("\n" if out else "")
