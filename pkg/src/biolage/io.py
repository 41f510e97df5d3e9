"""CSV and JSON emitters with locale-free 17-digit formatting, plus readers for round trips."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .ibm import Histogram
from .moments import MomentVector
from .pde import DensityState

HIST_HEADER = ["bin_left", "bin_right", "count", "density"]
MOMENT_HEADER = ["t", "k", "value", "log10_flag"]
DENSITY_HEADER = ["t", "b_center", "density"]


def fmt(x) -> str:
    """17 significant digits (reads back to the same double); integers stay integral."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_rows(path: Path, header: list, rows: Iterable) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _read_rows(path: Path, header: list) -> list:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        got = next(r, None)
        if got != header:
            raise ParseError(f"{path}: expected header {header}, got {got}")
        return [row for row in r if row]


# histograms ---------------------------------------------------------------
def write_histogram(path, hist: Histogram) -> Path:
    dens = hist.density
    rows = [(hist.edges[i], hist.edges[i + 1], int(hist.counts[i]), dens[i]) for i in range(len(hist.counts))]
    rows.append((hist.edges[-1], math.inf, int(hist.overflow), 0.0))
    return write_rows(path, HIST_HEADER, rows)


def read_histogram(path, t: float = 0.0) -> Histogram:
    rows = _read_rows(path, HIST_HEADER)
    body = [r for r in rows if r[1] != "inf"]
    over = [r for r in rows if r[1] == "inf"]
    edges = np.array([float(r[0]) for r in body] + [float(body[-1][1])])
    counts = np.array([int(r[2]) for r in body], dtype=np.int64)
    return Histogram(edges, counts, int(over[0][2]) if over else 0, t)


# moments -----------------------------------------------------------------
def write_moments(path, vectors: Sequence[MomentVector]) -> Path:
    rows = ((v.t, k, v.values[k], int(v.flags[k])) for v in vectors for k in range(v.K + 1))
    return write_rows(path, MOMENT_HEADER, rows)


def read_moments(path) -> list:
    rows = _read_rows(path, MOMENT_HEADER)
    out, cur_t, vals, flags = [], None, [], []
    for t, k, v, f in rows:
        t = float(t)
        if cur_t is not None and t != cur_t:
            out.append(MomentVector(cur_t, vals, flags))
            vals, flags = [], []
        cur_t = t
        if int(k) != len(vals):
            raise ParseError(f"{path}: moment orders out of sequence at t={t}")
        vals.append(float(v))
        flags.append(bool(int(f)))
    if cur_t is not None:
        out.append(MomentVector(cur_t, vals, flags))
    return out


# density snapshots ---------------------------------------------------------
def write_density(path, states: Sequence[DensityState]) -> Path:
    def rows():
        for s in states:
            dens = s.density
            centers = s.grid.centers
            for i in np.flatnonzero(dens):
                yield s.t, centers[i], dens[i]

    return write_rows(path, DENSITY_HEADER, rows())


def read_density(path) -> dict:
    """Map ``t -> (b_center, density)`` arrays holding the nonzero rows."""
    out: dict = {}
    for t, b, d in _read_rows(path, DENSITY_HEADER):
        out.setdefault(float(t), ([], []))
        out[float(t)][0].append(float(b))
        out[float(t)][1].append(float(d))
    return {t: (np.array(b), np.array(d)) for t, (b, d) in out.items()}


# json / manifest -----------------------------------------------------------
def _default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8", newline="\n")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(paths: Iterable, root) -> dict:
    root = Path(root)
    return {"files": {Path(p).relative_to(root).as_posix(): sha256(p) for p in sorted(paths)}}
