"""Effective CLI configuration: flags > environment > config file > defaults."""

from __future__ import annotations

import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields
from pathlib import Path

from .archive import DEFAULT_ARCHIVE_URL
from .fetcher import DEFAULT_ALPHAFOLD_URL, DEFAULT_PDB_URL, DEFAULT_UNIPROT_URL

_ENV_VARS = {
    "archive_url": "CRYOCURATE_ARCHIVE_URL",
    "pdb_url": "CRYOCURATE_PDB_URL",
    "alphafold_url": "CRYOCURATE_ALPHAFOLD_URL",
    "uniprot_url": "CRYOCURATE_UNIPROT_URL",
    "cache_dir": "CRYOCURATE_CACHE_DIR",
}

_DEFAULTS = {
    "archive_url": DEFAULT_ARCHIVE_URL,
    "pdb_url": DEFAULT_PDB_URL,
    "alphafold_url": DEFAULT_ALPHAFOLD_URL,
    "uniprot_url": DEFAULT_UNIPROT_URL,
    "cache_dir": ".",
}


@dataclass
class CliConfig:
    archive_url: str
    pdb_url: str
    alphafold_url: str
    uniprot_url: str
    cache_dir: str
    verbosity: int = 0
    timeout: float = 30.0

    @classmethod
    def load(cls, config_file: str | None = None, **overrides) -> "CliConfig":
        values = dict(_DEFAULTS)
        if config_file:
            with open(config_file, "rb") as fh:
                file_values = tomllib.load(fh)
            for key in values:
                if key in file_values:
                    values[key] = file_values[key]
            for key in ("verbosity", "timeout"):
                if key in file_values:
                    values[key] = file_values[key]
        for key, env in _ENV_VARS.items():
            if os.environ.get(env):
                values[key] = os.environ[env]
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        return cls(**values)

    def show(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "cache_dir":
                value = str(Path(value).expanduser())
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines)
