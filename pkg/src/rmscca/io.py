"""Matrix CSV, JSON and TSV persistence.

Floats are written with ``repr`` (shortest round-trip form), so a
write-then-read cycle reproduces every value exactly.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, ParseError

SCHEMA_VERSION = 1


def read_matrix_csv(path):
    """Read a header + numeric-rows CSV. Returns ``(matrix, names)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: no such file") from None
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError(f"{path}: empty file")
    names = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise ParseError(f"{path}: no data rows")
    out = np.empty((len(rows) - 1, len(names)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise ParseError(
                f"{path}: row {i} has {len(row)} fields, expected {len(names)}"
            )
        for j, cell in enumerate(row):
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {i}, column {j + 1} ({names[j]!r}): cannot parse {cell!r}"
                ) from None
    return out, names


def format_matrix_csv(m, names=None) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if names is None:
        names = [f"v{j + 1}" for j in range(m.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in m:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_matrix_csv(path, m, names=None):
    atomic_write(path, format_matrix_csv(m, names))


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if np.isnan(f):
            return None
        if np.isinf(f):
            return "-inf" if f < 0 else "inf"
        return f
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path, kind=None) -> dict:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if d.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInputError(
            f"{path}: schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    if kind is not None and d.get("kind") != kind:
        raise InvalidInputError(f"{path}: expected a {kind!r} file, found {d.get('kind')!r}")
    return d


def load_float(v) -> float:
    """Inverse of the JSON float encoding (None -> nan, "-inf"/"inf" strings)."""
    return float("nan") if v is None else float(v)


def format_tsv(header, rows) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
