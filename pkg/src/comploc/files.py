"""CSV / JSON persistence for fields, tables, traces and run records.

CSV files are RFC-4180 with '.' decimals and LF line endings.  A field file
carries one header row (dimension, per-axis node counts, spacings, extents)
followed by the row-major values, one per line.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .grids import Domain, ScalarField
from .theta import ThetaTable


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def write_field_csv(path: str, field: ScalarField, outer: str | None = None) -> None:
    d = field.domain.d
    header = (
        ["d"]
        + [f"n{a}" for a in range(d)]
        + [f"h{a}" for a in range(d)]
        + [f"extent{a}" for a in range(d)]
    )
    meta = (
        [d]
        + list(field.shape)
        + [f"{v!r}" for v in field.h]
        + [f"{v!r}" for v in field.domain.extents]
    )
    lines = [",".join(header), ",".join(str(v) for v in meta)]
    lines.extend(repr(float(v)) for v in field.values.ravel(order="C"))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_field_csv(path: str, outer: str = "dirichlet") -> ScalarField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, meta = rows[0], rows[1]
    d = int(meta[header.index("d")])
    shape = tuple(int(meta[header.index(f"n{a}")]) for a in range(d))
    extents = tuple(float(meta[header.index(f"extent{a}")]) for a in range(d))
    vals = np.array([float(r[0]) for r in rows[2:] if r], dtype=float)
    if vals.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, got {vals.size}")
    return ScalarField(Domain(extents, outer), vals.reshape(shape))


def write_table_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_theta_csv(path: str, table: ThetaTable) -> None:
    write_table_csv(
        path,
        ["alpha", "theta", "err", "k_max", "h", "family"],
        [
            (s.alpha, s.theta, s.err, s.k_max, s.h, s.family)
            for s in table.samples
        ],
    )


def write_jsonl(path: str, records) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_jsonl(path: str) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
