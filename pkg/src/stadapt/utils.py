"""Small shared helpers: seed derivation, file hashing, CSV logging."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path


def derive_seed(master: int, *names: str) -> int:
    """Derive a stable child seed from a master seed and a name path.

    Independent RNG streams (clip sampling, batch order, model init, ...) each
    get their own named seed so adding or removing one stream never shifts the
    others.
    """
    tag = f"{master}/" + "/".join(names)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def file_sha256(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class CsvLogger:
    """Append-only CSV writer that creates the header once."""

    def __init__(self, path: Path | str, fieldnames: list[str]):
        self.path = Path(path)
        self.fieldnames = fieldnames
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as f:
            csv.writer(f).writerow(fieldnames)

    def append(self, row: dict) -> None:
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([row[k] for k in self.fieldnames])
