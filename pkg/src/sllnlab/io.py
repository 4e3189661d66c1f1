"""Atomic file output and the CSV/JSON layouts shared by the harness and the CLI.

Files are written to a temporary sibling and renamed into place, so an
interrupted run never leaves a partial artifact behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .process import ProcessPath

PATH_COLUMNS = ("k", "value", "raw")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def check_writable(path) -> Path:
    """Fail early if ``path`` cannot be created; nothing is written."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if path.is_dir():
        raise IsADirectoryError(f"{path} is a directory")
    if not parent.is_dir():
        raise FileNotFoundError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK):
        raise PermissionError(f"output directory {parent} is not writable")
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_csv(path, header, rows) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json_text(obj))


# --------------------------------------------------------------------------
# process paths


def path_rows(path: ProcessPath) -> list:
    # repr keeps full float precision so a reload is lossless
    return [(k, repr(float(v)), repr(float(w)))
            for k, v, w in zip(range(1, path.k_max + 1), path.values, path.raw)]


def path_to_dict(path: ProcessPath, params: dict | None = None) -> dict:
    out = {"seed": path.seed, "k_max": path.k_max, "values": path.values.tolist(),
           "raw": path.raw.tolist()}
    if params is not None:
        out["params"] = params
    return out


def path_from_dict(d: dict) -> ProcessPath:
    return ProcessPath(int(d["seed"]), int(d["k_max"]), np.asarray(d["values"], dtype=np.float64),
                       np.asarray(d["raw"], dtype=np.float64))


def read_path_csv(path, seed: int) -> ProcessPath:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    values = np.array([float(r["value"]) for r in rows])
    raw = np.array([float(r["raw"]) for r in rows])
    return ProcessPath(int(seed), len(rows), values, raw)
