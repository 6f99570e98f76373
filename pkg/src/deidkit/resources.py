"""Line-oriented word lists shipped with the package or supplied by the user."""

from __future__ import annotations

import os
from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"
RESOURCE_ENV = "DEIDKIT_RESOURCES"


def resource_dir(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(RESOURCE_ENV)
    return Path(env) if env else DATA_DIR


def parse_list(text: str) -> list[str]:
    """Entries from a UTF-8 list: one per line, ``#`` comments, case-folded dedup (first wins)."""
    seen = set()
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.casefold()
        if key not in seen:
            seen.add(key)
            out.append(line)
    return out


def load_list(path: str | os.PathLike) -> list[str]:
    return parse_list(Path(path).read_text(encoding="utf-8"))


def load_tagged_list(path: str | os.PathLike, default_tag: str = "Care Institute") -> list[tuple[str, str]]:
    """Entries of the form ``name<TAB>tag``; a missing tag falls back to ``default_tag``."""
    out = []
    for entry in load_list(path):
        name, _, tag = entry.partition("\t")
        out.append((name.strip(), tag.strip() or default_tag))
    return out


def builtin(name: str) -> list[str]:
    return load_list(DATA_DIR / f"{name}.txt")
