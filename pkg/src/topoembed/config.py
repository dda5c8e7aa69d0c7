"""Flat key=value config files and per-run output manifests."""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DomainError
from .models import _atomic_write_text, file_sha256


def _parse_scalar(raw: str):
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict:
    """`key = value` per line; # comments; commas make a list."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DomainError(f"line {lineno}: expected key = value, "
                              f"got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise DomainError(f"line {lineno}: empty key")
        if key in out:
            raise DomainError(f"line {lineno}: duplicate key {key!r}")
        if "," in raw:
            out[key] = [_parse_scalar(p) for p in raw.split(",") if p.strip()]
        else:
            out[key] = _parse_scalar(raw)
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DomainError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"))


@dataclass
class RunManifest:
    """What produced an artifact: subcommand, resolved flags, input hashes."""

    subcommand: str
    config: dict
    input_hashes: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    seed: int = 0
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat()

    def add_input(self, path) -> None:
        path = Path(path)
        self.input_hashes[str(path)] = file_sha256(path)

    def write(self, path) -> None:
        blob = {"subcommand": self.subcommand, "config": self.config,
                "input_hashes": self.input_hashes,
                "outputs": [str(p) for p in self.outputs],
                "seed": self.seed, "timestamp": self.timestamp}
        _atomic_write_text(Path(path), json.dumps(blob, indent=2,
                                                  sort_keys=True) + "\n")


def manifest_for(out_path) -> Path:
    """Manifest file written next to an output artifact."""
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + ".run.json")
