"""Deterministic CSV emission.

Every numeric file starts with one ``# jumpchain <version>`` line followed by
the header; floats are written in shortest round-trip form so that identical
inputs give byte-identical files.
"""
import csv
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, columns, rows, meta=None):
    """Write ``rows`` (an iterable of sequences or a 2-d array) under ``columns``.

    ``meta`` entries become ``# key=value`` comment lines after the version line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# jumpchain {__version__}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={_fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_records(path, records):
    """Write a list of dicts; columns are the union of keys in first-seen order."""
    cols = []
    for r in records:
        for k in r:
            if k not in cols:
                cols.append(k)
    return write_csv(path, cols, ([r.get(c, "") for c in cols] for r in records))


def read_meta(path):
    """The ``# key=value`` lines of a file written by :func:`write_csv`."""
    out = {}
    with open(path, newline="") as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            body = ln[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                out[k] = v
    return out


def read_csv(path):
    """Read a file written by :func:`write_csv` into (columns, list of rows)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    return cols, [row for row in reader]
