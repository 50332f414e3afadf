"""CSV writing with a provenance comment line.

Every file starts with ``# key=value,key=value`` (config hash, seed, ...)
followed by a normal header row.  Floats are written with ``repr`` so a
re-run produces the same bytes.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))
    if hasattr(v, "item"):  # numpy scalar
        return fmt(v.item())
    return str(v)


def write_csv(path, meta: dict, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# " + ",".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, header, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing provenance line")
        meta = {}
        for item in first[1:].strip().split(","):
            if item:
                key, _, val = item.partition("=")
                meta[key.strip()] = val.strip()
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    return meta, header, rows
