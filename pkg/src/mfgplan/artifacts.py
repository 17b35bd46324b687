"""Atomic file output for CSV and JSON artifacts.

Every writer lands on a temporary file in the destination directory and
renames it into place, so interrupted runs never leave partial artifacts and
reruns with identical inputs are idempotent.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def _atomic_write(path: Path, write_fn) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def write_json(path, payload: dict) -> Path:
    return _atomic_write(Path(path), lambda fh: json.dump(payload, fh, indent=2, sort_keys=True))


def write_csv(path, header: list[str], columns) -> Path:
    """Write columns (equal-length sequences) under the given header."""
    cols = [list(c) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")

    def emit(fh):
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")

    return _atomic_write(Path(path), emit)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)
