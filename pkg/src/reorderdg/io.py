"""Run outputs: a versioned CSV time series and legacy-ASCII VTK snapshots."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import PolyMesh

__all__ = ["CSV_SCHEMA_VERSION", "CsvReporter", "read_report", "write_vtk"]

CSV_SCHEMA_VERSION = 1

VTK_POLYGON = 7
VTK_POLYHEDRON = 42


class CsvReporter:
    """Append-only CSV writer whose first line names the column schema version.

    Columns are fixed by the first row written; later rows may omit keys
    (left blank) but may not add new ones.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = None
        self._writer = None
        self.columns = None

    def write(self, row: dict):
        if self._writer is None:
            self.columns = list(row)
            self._fh = open(self.path, "w", newline="")
            self._fh.write(f"# reorderdg report schema v{CSV_SCHEMA_VERSION}\n")
            self._writer = csv.DictWriter(self._fh, fieldnames=self.columns,
                                          extrasaction="raise", restval="")
            self._writer.writeheader()
        self._writer.writerow({k: _fmt(v) for k, v in row.items()})
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_report(path):
    """Read a report written by :class:`CsvReporter` into ``(version, rows)``."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        version = int(first.rsplit("v", 1)[1])
        rows = list(csv.DictReader(fh))
    return version, rows


def write_vtk(path, mesh: PolyMesh, cell_data: dict, title="reorderdg"):
    """Legacy ASCII unstructured grid with polygon (2D) or polyhedron (3D) cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    lines = ["# vtk DataFile Version 4.2", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [" ".join(repr(float(x)) for x in p) for p in pts]
    records = []
    for c in range(mesh.n_cells):
        if mesh.dim == 2:
            loop = mesh.cell_vertex_loop(c)
            records.append([len(loop), *loop.tolist()])
        else:
            stream = []
            loops = mesh.oriented_face_loops(c)
            for loop in loops:
                stream += [len(loop), *np.asarray(loop).tolist()]
            records.append([len(stream) + 1, len(loops), *stream])
    if mesh.dim == 2:
        size = sum(len(r) for r in records)
        lines.append(f"CELLS {mesh.n_cells} {size}")
        lines += [" ".join(map(str, r)) for r in records]
        ctype = VTK_POLYGON
    else:
        size = sum(len(r) for r in records)
        lines.append(f"CELLS {mesh.n_cells} {size}")
        lines += [" ".join(map(str, r)) for r in records]
        ctype = VTK_POLYHEDRON
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(ctype)] * mesh.n_cells
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float).reshape(mesh.n_cells, -1)
            ncomp = values.shape[1]
            lines.append(f"SCALARS {name} double {ncomp}")
            lines.append("LOOKUP_TABLE default")
            lines += [" ".join(repr(float(x)) for x in row) for row in values]
    path.write_text("\n".join(lines) + "\n")
