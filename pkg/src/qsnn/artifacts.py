"""Per-run artifact writer: reproducible CSV/JSON output plus file hashes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def csv_text(header: Sequence[str], columns: Sequence[Iterable]) -> str:
    cols = [list(c) for c in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer))
                                                 and not isinstance(v, bool) else fmt(v))
                    for v in row])
    return buf.getvalue()


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


class RunWriter:
    """Writes files under one directory and remembers what it wrote."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, dict] = {}

    def _record(self, rel: str, data: bytes) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files[rel] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        return path

    def text(self, rel: str, text: str) -> Path:
        return self._record(rel, text.encode())

    def csv(self, rel: str, header: Sequence[str], columns: Sequence[Iterable]) -> Path:
        return self.text(rel, csv_text(header, columns))

    def json(self, rel: str, obj) -> Path:
        return self.text(rel, json_text(obj))

    def adopt(self, rel: str) -> None:
        """Register a file written by other code."""
        self.files[rel] = {"sha256": hashlib.sha256((self.root / rel).read_bytes()).hexdigest(),
                           "bytes": (self.root / rel).stat().st_size}
