"""CSV files for diagnostics and field snapshots, written atomically."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import BoxDomain
from .simulator import DiagnosticsSeries, FieldSet

SNAPSHOT_HEADER = ["axis0", "axis1", "axis2", "species", "value"]
PER_SPECIES_COLUMNS = ("l2_dev", "h2_dev", "linf_dev", "mean")


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def diagnostics_header(series: DiagnosticsSeries) -> list[str]:
    return (
        ["t", "species", *PER_SPECIES_COLUMNS]
        + [f"total_{name}" for name in series.total_names]
        + ["energy", "triple_norm"]
    )


def diagnostics_csv(series: DiagnosticsSeries) -> str:
    """Long format: one row per recorded time and species."""
    rows = []
    for m, t in enumerate(series.t):
        shared_tail = [fmt(v) for v in series.totals[m]] + [fmt(series.energy[m]), fmt(series.triple_norm[m])]
        for i, name in enumerate(series.species):
            rows.append(
                [
                    fmt(t),
                    name,
                    fmt(series.l2_dev[m, i]),
                    fmt(series.h2_dev[m, i]),
                    fmt(series.linf_dev[m, i]),
                    fmt(series.mean[m, i]),
                    *shared_tail,
                ]
            )
    return _csv_text(diagnostics_header(series), rows)


def write_diagnostics(series: DiagnosticsSeries, path) -> Path:
    return atomic_write(path, diagnostics_csv(series))


def read_csv_columns(path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h.strip(): [] for h in header}
        keys = list(cols)
        for row in reader:
            if not row:
                continue
            for key, value in zip(keys, row):
                cols[key].append(value.strip())
    return cols


def series_column(path, column: str, species: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Time and value arrays of one diagnostics column.

    Per-species columns need ``species``; shared columns are read once per time.
    """
    cols = read_csv_columns(path)
    if column not in cols:
        raise KeyError(f"column {column!r} not in {path}; available: {', '.join(cols)}")
    if "t" not in cols:
        raise KeyError(f"{path} has no 't' column")
    t = cols["t"]
    labels = cols.get("species")
    keep = range(len(t))
    if species is not None:
        if labels is None:
            raise KeyError(f"{path} has no species column")
        keep = [i for i, s in enumerate(labels) if s == species]
        if not keep:
            raise KeyError(f"species {species!r} not found in {path}")
    elif labels is not None:
        if column in PER_SPECIES_COLUMNS:
            raise KeyError(f"column {column!r} is per species; pass a species name")
        seen = set()
        keep = [i for i, ti in enumerate(t) if not (ti in seen or seen.add(ti))]
    times = np.array([float(t[i]) for i in keep])
    values = np.array([float(cols[column][i]) for i in keep])
    return times, values


def snapshot_csv(state: FieldSet, names: list[str]) -> str:
    d = state.domain
    coords = [c.ravel() for c in d.mesh()]
    values = state.values.reshape(state.n_species, -1)
    rows = []
    for i, name in enumerate(names):
        for j in range(d.n_cells):
            axes = [fmt(coords[a][j]) if a < d.dim else "" for a in range(3)]
            rows.append([*axes, name, fmt(values[i, j])])
    return _csv_text(SNAPSHOT_HEADER, rows)


def write_snapshot(state: FieldSet, names: list[str], path) -> Path:
    return atomic_write(path, snapshot_csv(state, names))


def read_snapshot(path) -> tuple[FieldSet, list[str]]:
    """Reload a snapshot; the grid is recovered from the cell-center coordinates."""
    cols = read_csv_columns(path)
    if list(cols) != SNAPSHOT_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SNAPSHOT_HEADER)}")
    dim = sum(1 for a in range(3) if cols[f"axis{a}"] and cols[f"axis{a}"][0] != "")
    if dim == 0:
        raise ValueError(f"{path}: no coordinate columns")
    names = list(dict.fromkeys(cols["species"]))
    coords = np.array([[float(x) for x in cols[f"axis{a}"]] for a in range(dim)])
    cells, lengths, index = [], [], []
    for a in range(dim):
        centers = np.unique(coords[a])
        n = centers.size
        h = centers[1] - centers[0] if n > 1 else 2.0 * centers[0]
        cells.append(n)
        lengths.append(n * h)
        index.append(np.clip(np.rint(coords[a] / h - 0.5).astype(int), 0, n - 1))
    domain = BoxDomain(dim=dim, lengths=tuple(lengths), cells=tuple(cells))
    values = np.zeros((len(names),) + domain.shape)
    species_idx = {name: i for i, name in enumerate(names)}
    for row, name in enumerate(cols["species"]):
        values[(species_idx[name],) + tuple(ix[row] for ix in index)] = float(cols["value"][row])
    return FieldSet.from_values(domain, values), names
