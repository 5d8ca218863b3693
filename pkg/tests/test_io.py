import numpy as np
import pytest

from reorderdg.io import CSV_SCHEMA_VERSION, CsvReporter, read_report, write_vtk
from reorderdg.mesh import build_cartesian


def test_csv_round_trip(tmp_path):
    path = tmp_path / "sub" / "run.csv"
    with CsvReporter(path) as rep:
        rep.write({"step": 1, "time": 0.1, "cut": np.float64(1 / 3)})
        rep.write({"step": 2, "time": 0.2})
    assert path.read_text().splitlines()[0] == f"# reorderdg report schema v{CSV_SCHEMA_VERSION}"
    version, rows = read_report(path)
    assert version == CSV_SCHEMA_VERSION
    assert rows[0] == {"step": "1", "time": "0.1", "cut": repr(1 / 3)}
    assert rows[1]["cut"] == ""


def test_csv_rejects_new_columns(tmp_path):
    rep = CsvReporter(tmp_path / "r.csv")
    rep.write({"a": 1})
    with pytest.raises(ValueError):
        rep.write({"a": 2, "b": 3})
    rep.close()


def _sections(text):
    lines = text.splitlines()
    return lines, {ln.split()[0]: i for i, ln in enumerate(lines) if ln[:1].isalpha()}


def test_vtk_polygons(tmp_path):
    mesh = build_cartesian(3, 2, lx=3.0, ly=2.0)
    write_vtk(tmp_path / "m.vtk", mesh, {"sw": np.arange(6.0), "v": np.ones((6, 2))})
    lines, at = _sections((tmp_path / "m.vtk").read_text())
    assert lines[0] == "# vtk DataFile Version 4.2"
    assert lines[at["POINTS"]] == "POINTS 12 double"
    assert lines[at["CELLS"]] == "CELLS 6 30"
    cell0 = list(map(int, lines[at["CELLS"] + 1].split()))
    pts = np.array([list(map(float, lines[at["POINTS"] + 1 + k].split())) for k in cell0[1:]])
    assert cell0[0] == 4
    # counter-clockwise unit square at the origin
    x, y = pts[:, 0], pts[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) == pytest.approx(1.0)
    assert lines[at["CELL_TYPES"] + 1] == "7"
    i = lines.index("SCALARS sw double 1")
    assert [float(v) for v in lines[i + 2:i + 8]] == list(range(6))
    assert "SCALARS v double 2" in lines


def test_vtk_polyhedra(tmp_path):
    mesh = build_cartesian(2, 1, 1)
    write_vtk(tmp_path / "m.vtk", mesh, {"p": [1.0, 2.0]})
    lines, at = _sections((tmp_path / "m.vtk").read_text())
    rec = list(map(int, lines[at["CELLS"] + 1].split()))
    # size, number of faces, then (count, ids...) per face
    assert rec[0] == len(rec) - 1 and rec[1] == 6
    pos, faces = 2, 0
    while pos < len(rec):
        assert rec[pos] == 4
        pos += 5
        faces += 1
    assert faces == 6
    n_cells, size = map(int, lines[at["CELLS"]].split()[1:])
    assert n_cells == 2 and size == 2 * len(rec)
    assert lines[at["CELL_TYPES"] + 1] == "42"
