"""Polygonal (2D) and polyhedral (3D) grids.

Faces are stored once, with an owner cell, an optional neighbor cell and a
unit normal pointing from owner to neighbor (outward from the owner on the
boundary).  Geometry is derived from vertex coordinates and the topology:

* 2D faces are straight edges.  The edge ``a -> b`` has normal ``(t_y, -t_x)``
  so a loop traversed counter-clockwise by its owner has outward normals.
* 3D faces are vertex loops whose right-hand normal points out of the owner.

Cell volumes and centroids use a fan of simplices from the cell vertex mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, MeshLoadError

__all__ = [
    "PolyMesh",
    "build_cartesian",
    "load_mesh",
    "save_mesh",
    "polygon_mesh",
    "polyhedral_mesh",
    "cell_bounding_box",
]


def _csr(lists):
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.fromiter((v for x in lists for v in x), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


@dataclass(frozen=True, eq=False)
class PolyMesh:
    dim: int
    vertices: np.ndarray
    face_ptr: np.ndarray
    face_nodes: np.ndarray
    face_cells: np.ndarray
    cell_ptr: np.ndarray
    cell_faces: np.ndarray
    cell_face_signs: np.ndarray
    face_centroids: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray
    cell_centroids: np.ndarray
    cell_volumes: np.ndarray
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray
    cartesian_shape: tuple | None = None
    _cell_nodes: list = field(default_factory=list, repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cell_volumes)

    @property
    def n_faces(self) -> int:
        return len(self.face_areas)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def bbox_size(self) -> np.ndarray:
        return self.bbox_hi - self.bbox_lo

    def faces_of(self, cell: int) -> np.ndarray:
        return self.cell_faces[self.cell_ptr[cell]:self.cell_ptr[cell + 1]]

    def signs_of(self, cell: int) -> np.ndarray:
        return self.cell_face_signs[self.cell_ptr[cell]:self.cell_ptr[cell + 1]]

    def nodes_of_face(self, face: int) -> np.ndarray:
        return self.face_nodes[self.face_ptr[face]:self.face_ptr[face + 1]]

    def nodes_of(self, cell: int) -> np.ndarray:
        return self._cell_nodes[cell]

    def neighbors_of(self, cell: int) -> np.ndarray:
        faces = self.faces_of(cell)
        fc = self.face_cells[faces]
        other = np.where(fc[:, 0] == cell, fc[:, 1], fc[:, 0])
        return other[other >= 0]

    def cell_vertex_loop(self, cell: int) -> np.ndarray:
        """Counter-clockwise vertex loop of a 2D cell."""
        if self.dim != 2:
            raise ValueError("vertex loops are only defined for 2D cells")
        nxt = {}
        for f, s in zip(self.faces_of(cell), self.signs_of(cell)):
            a, b = self.nodes_of_face(f)
            if s < 0:
                a, b = b, a
            nxt[int(a)] = int(b)
        start = next(iter(nxt))
        loop = [start]
        while nxt[loop[-1]] != start:
            loop.append(nxt[loop[-1]])
        return np.array(loop, dtype=np.int64)

    def oriented_face_loops(self, cell: int) -> list[np.ndarray]:
        """Face vertex loops of a 3D cell, each oriented outward."""
        loops = []
        for f, s in zip(self.faces_of(cell), self.signs_of(cell)):
            nodes = self.nodes_of_face(f)
            loops.append(nodes if s > 0 else nodes[::-1])
        return loops

    def closedness(self) -> np.ndarray:
        """Per cell: |sum of outward area vectors| / total surface area."""
        out = np.empty(self.n_cells)
        vec = self.face_normals * self.face_areas[:, None]
        for c in range(self.n_cells):
            f = self.faces_of(c)
            s = self.signs_of(c)
            tot = (vec[f] * s[:, None]).sum(axis=0)
            out[c] = np.linalg.norm(tot) / self.face_areas[f].sum()
        return out


def cell_bounding_box(mesh: PolyMesh, i: int):
    """Centroid and axis-aligned box extents of cell ``i``."""
    return mesh.cell_centroids[i].copy(), (mesh.bbox_hi[i] - mesh.bbox_lo[i]).copy()


# ---------------------------------------------------------------------------
# geometry

def _face_geometry(dim, vertices, face_ptr, face_nodes):
    nf = len(face_ptr) - 1
    if dim == 2:
        counts = np.diff(face_ptr)
        if np.any(counts != 2):
            bad = int(np.flatnonzero(counts != 2)[0])
            raise MeshLoadError(f"2D face {bad} must have exactly two vertices")
        a = vertices[face_nodes[0::2]]
        b = vertices[face_nodes[1::2]]
        t = b - a
        area = np.hypot(t[:, 0], t[:, 1])
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / np.where(area > 0, area, 1.0)[:, None]
        return 0.5 * (a + b), area, normal
    centroids = np.empty((nf, 3))
    areas = np.empty(nf)
    normals = np.empty((nf, 3))
    for f in range(nf):
        pts = vertices[face_nodes[face_ptr[f]:face_ptr[f + 1]]]
        c0 = pts.mean(axis=0)
        p1 = pts
        p2 = np.roll(pts, -1, axis=0)
        tri = 0.5 * np.cross(p1 - c0, p2 - c0)
        vec = tri.sum(axis=0)
        a = np.linalg.norm(vec)
        n = vec / a if a > 0 else vec
        w = tri @ n
        tc = (c0 + p1 + p2) / 3.0
        centroids[f] = (w[:, None] * tc).sum(axis=0) / w.sum() if a > 0 else c0
        areas[f] = a
        normals[f] = n
    return centroids, areas, normals


def _cell_geometry(dim, vertices, face_ptr, face_nodes, cell_ptr, cell_faces, cell_signs):
    nc = len(cell_ptr) - 1
    vols = np.empty(nc)
    cents = np.empty((nc, dim))
    lo = np.empty((nc, dim))
    hi = np.empty((nc, dim))
    cell_nodes = []
    for c in range(nc):
        faces = cell_faces[cell_ptr[c]:cell_ptr[c + 1]]
        signs = cell_signs[cell_ptr[c]:cell_ptr[c + 1]]
        nodes = np.unique(np.concatenate([face_nodes[face_ptr[f]:face_ptr[f + 1]] for f in faces]))
        cell_nodes.append(nodes)
        pts = vertices[nodes]
        lo[c] = pts.min(axis=0)
        hi[c] = pts.max(axis=0)
        c0 = pts.mean(axis=0)
        vol = 0.0
        mom = np.zeros(dim)
        for f, s in zip(faces, signs):
            fp = vertices[face_nodes[face_ptr[f]:face_ptr[f + 1]]]
            if s < 0:
                fp = fp[::-1]
            if dim == 2:
                a, b = fp[0] - c0, fp[1] - c0
                v = 0.5 * (a[0] * b[1] - a[1] * b[0])
                vol += v
                mom += v * (c0 + fp[0] + fp[1]) / 3.0
            else:
                fc = fp.mean(axis=0)
                p1 = fp
                p2 = np.roll(fp, -1, axis=0)
                v = np.einsum("ij,ij->i", np.cross(p1 - c0, p2 - c0), np.broadcast_to(fc - c0, p1.shape)) / 6.0
                vol += v.sum()
                mom += (v[:, None] * (c0 + fc + p1 + p2) / 4.0).sum(axis=0)
        vols[c] = vol
        cents[c] = mom / vol if vol != 0 else c0
    return vols, cents, lo, hi, cell_nodes


def _assemble(dim, vertices, face_lists, face_cells, cell_lists, *, validate=True,
              cartesian_shape=None):
    vertices = np.ascontiguousarray(vertices, dtype=float)
    face_cells = np.asarray(face_cells, dtype=np.int64).reshape(-1, 2)
    face_ptr, face_nodes = _csr(face_lists)
    cell_ptr, cell_faces = _csr(cell_lists)
    nc = len(cell_lists)
    signs = np.empty_like(cell_faces)
    for c in range(nc):
        for k in range(cell_ptr[c], cell_ptr[c + 1]):
            f = cell_faces[k]
            if face_cells[f, 0] == c:
                signs[k] = 1
            elif face_cells[f, 1] == c:
                signs[k] = -1
            else:
                raise MeshLoadError(f"cell {c} lists face {f}, which is not adjacent to it", cell=c)
    fcent, farea, fnorm = _face_geometry(dim, vertices, face_ptr, face_nodes)
    vols, cents, lo, hi, cell_nodes = _cell_geometry(
        dim, vertices, face_ptr, face_nodes, cell_ptr, cell_faces, signs)
    mesh = PolyMesh(dim, vertices, face_ptr, face_nodes, face_cells, cell_ptr, cell_faces,
                    signs, fcent, farea, fnorm, cents, vols, lo, hi, cartesian_shape, cell_nodes)
    if validate:
        _validate(mesh)
    return mesh


def _validate(mesh: PolyMesh):
    nf = mesh.n_faces
    seen = np.zeros((nf, 2), dtype=bool)
    for c in range(mesh.n_cells):
        for f, s in zip(mesh.faces_of(c), mesh.signs_of(c)):
            seen[f, 0 if s > 0 else 1] = True
    for f in range(nf):
        o, n = mesh.face_cells[f]
        if o < 0 or o >= mesh.n_cells:
            raise MeshLoadError(f"face {f} has invalid owner {o}")
        if n >= mesh.n_cells or n == o:
            raise MeshLoadError(f"face {f} has invalid neighbor {n}")
        if not seen[f, 0] or (n >= 0 and not seen[f, 1]):
            c = int(o) if not seen[f, 0] else int(n)
            raise MeshLoadError(f"cell {c} does not list its face {f}", cell=c)
        if mesh.face_areas[f] <= 0:
            raise MeshLoadError(f"face {f} has zero area", cell=int(o))
    closed = mesh.closedness()
    bad = np.flatnonzero(closed > 1e-12)
    if bad.size:
        c = int(bad[0])
        raise MeshLoadError(f"cell {c} is not closed (relative area-vector sum {closed[c]:.3e})",
                            cell=c)
    bad = np.flatnonzero(mesh.cell_volumes <= 0)
    if bad.size:
        c = int(bad[0])
        raise MeshLoadError(f"cell {c} is inverted (volume {mesh.cell_volumes[c]:.6g})", cell=c)


# ---------------------------------------------------------------------------
# constructors

def build_cartesian(nx, ny, nz=None, lx=1.0, ly=1.0, lz=1.0) -> PolyMesh:
    """Structured grid of ``nx*ny(*nz)`` cells; ``nz=None`` gives a 2D mesh.

    Cells are numbered with x fastest.  In 3D the z axis is depth.
    """
    counts = (nx, ny) if nz is None else (nx, ny, nz)
    lengths = (lx, ly) if nz is None else (lx, ly, lz)
    for name, n in zip("xyz", counts):
        if int(n) != n or n < 1:
            raise ConfigurationError(f"n{name} must be a positive integer, got {n!r}", key=f"n{name}")
    for name, length in zip("xyz", lengths):
        if not length > 0:
            raise ConfigurationError(f"l{name} must be positive, got {length!r}", key=f"l{name}")
    counts = tuple(int(n) for n in counts)
    if nz is None:
        return _cartesian_2d(*counts, *lengths)
    return _cartesian_3d(*counts, *lengths)


def _cartesian_2d(nx, ny, lx, ly):
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + (nx + 1) * j

    def cid(i, j):
        return i + nx * j

    faces, fcells = [], []
    cell_faces = [[] for _ in range(nx * ny)]
    for j in range(ny):
        for i in range(nx + 1):
            a, b = vid(i, j), vid(i, j + 1)
            if i == 0:
                faces.append((b, a))
                fcells.append((cid(0, j), -1))
            else:
                faces.append((a, b))
                fcells.append((cid(i - 1, j), cid(i, j) if i < nx else -1))
    for j in range(ny + 1):
        for i in range(nx):
            a, b = vid(i + 1, j), vid(i, j)
            if j == 0:
                faces.append((b, a))
                fcells.append((cid(i, 0), -1))
            else:
                faces.append((a, b))
                fcells.append((cid(i, j - 1), cid(i, j) if j < ny else -1))
    for f, (o, n) in enumerate(fcells):
        cell_faces[o].append(f)
        if n >= 0:
            cell_faces[n].append(f)
    return _assemble(2, verts, faces, fcells, cell_faces, cartesian_shape=(nx, ny))


def _cartesian_3d(nx, ny, nz, lx, ly, lz):
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    def cid(i, j, k):
        return i + nx * (j + ny * k)

    faces, fcells = [], []

    def add(loop, lower, upper, at_low_end):
        # loop has right-hand normal pointing from lower to upper cell
        if at_low_end:
            faces.append(loop[::-1])
            fcells.append((upper, -1))
        else:
            faces.append(loop)
            fcells.append((lower, upper))

    for k in range(nz):
        for j in range(ny):
            for i in range(nx + 1):
                loop = (vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1))
                add(loop, cid(i - 1, j, k) if i > 0 else -1,
                    cid(i, j, k) if i < nx else -1, i == 0)
    for k in range(nz):
        for j in range(ny + 1):
            for i in range(nx):
                loop = (vid(i, j, k), vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j, k))
                add(loop, cid(i, j - 1, k) if j > 0 else -1,
                    cid(i, j, k) if j < ny else -1, j == 0)
    for k in range(nz + 1):
        for j in range(ny):
            for i in range(nx):
                loop = (vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k))
                add(loop, cid(i, j, k - 1) if k > 0 else -1,
                    cid(i, j, k) if k < nz else -1, k == 0)
    cell_faces = [[] for _ in range(nx * ny * nz)]
    for f, (o, n) in enumerate(fcells):
        cell_faces[o].append(f)
        if n >= 0:
            cell_faces[n].append(f)
    return _assemble(3, verts, faces, fcells, cell_faces, cartesian_shape=(nx, ny, nz))


def polygon_mesh(vertices, cells) -> PolyMesh:
    """2D mesh from per-cell vertex loops (either orientation)."""
    vertices = np.asarray(vertices, dtype=float)
    edge_id = {}
    faces, fcells = [], []
    cell_faces = []
    for c, loop in enumerate(cells):
        loop = [int(v) for v in loop]
        p = vertices[loop]
        signed = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
        if signed < 0:
            loop = loop[::-1]
        mine = []
        for a, b in zip(loop, loop[1:] + loop[:1]):
            key = (min(a, b), max(a, b))
            f = edge_id.get(key)
            if f is None:
                f = len(faces)
                edge_id[key] = f
                faces.append((a, b))
                fcells.append([c, -1])
            else:
                if fcells[f][1] != -1:
                    raise MeshLoadError(f"edge {key} shared by more than two cells", cell=c)
                fcells[f][1] = c
            mine.append(f)
        cell_faces.append(mine)
    return _assemble(2, vertices, faces, fcells, cell_faces)


def polyhedral_mesh(vertices, cells) -> PolyMesh:
    """3D mesh from cells given as lists of face vertex loops.

    Loops may have any orientation; each shared face is oriented outward from
    the first cell that lists it, judged against that cell's vertex mean.
    """
    vertices = np.asarray(vertices, dtype=float)
    face_id = {}
    faces, fcells = [], []
    cell_faces = []
    for c, loops in enumerate(cells):
        loops = [[int(v) for v in lp] for lp in loops]
        center = vertices[np.unique(np.concatenate(loops))].mean(axis=0)
        mine = []
        for lp in loops:
            key = tuple(sorted(lp))
            f = face_id.get(key)
            if f is None:
                p = vertices[lp]
                fc = p.mean(axis=0)
                vec = 0.5 * np.cross(p - fc, np.roll(p, -1, axis=0) - fc).sum(axis=0)
                if np.dot(vec, fc - center) < 0:
                    lp = lp[::-1]
                f = len(faces)
                face_id[key] = f
                faces.append(lp)
                fcells.append([c, -1])
            else:
                if fcells[f][1] != -1:
                    raise MeshLoadError(f"face {key} shared by more than two cells", cell=c)
                fcells[f][1] = c
            mine.append(f)
        cell_faces.append(mine)
    return _assemble(3, vertices, faces, fcells, cell_faces)


# ---------------------------------------------------------------------------
# text format

def load_mesh(path) -> PolyMesh:
    """Read the whitespace-separated polytopal mesh format.

    ``DIM nv nf nc`` / ``nv`` vertex lines / ``nf`` lines ``k v1..vk owner
    neighbor`` (neighbor ``-1`` on the boundary) / ``nc`` lines ``m f1..fm``.
    Text after ``#`` on a line is ignored.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshLoadError(f"cannot read mesh file {path}: {exc}") from exc
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    pos = 0

    def take(n, kind, what):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshLoadError(f"{path}: unexpected end of file while reading {what}")
        chunk = tokens[pos:pos + n]
        pos += n
        try:
            return [kind(t) for t in chunk]
        except ValueError as exc:
            raise MeshLoadError(f"{path}: bad value while reading {what}: {exc}") from None

    dim, nv, nf, nc = take(4, int, "header")
    if dim not in (2, 3) or min(nv, nf, nc) < 1:
        raise MeshLoadError(f"{path}: invalid header {dim} {nv} {nf} {nc}")
    verts = np.array(take(nv * dim, float, "vertices")).reshape(nv, dim)
    face_lists, fcells = [], []
    for f in range(nf):
        (k,) = take(1, int, f"face {f}")
        nodes = take(k, int, f"face {f}")
        if any(v < 0 or v >= nv for v in nodes):
            raise MeshLoadError(f"{path}: face {f} references a missing vertex")
        owner, nbr = take(2, int, f"face {f}")
        face_lists.append(nodes)
        fcells.append((owner, nbr))
    cell_lists = []
    for c in range(nc):
        (m,) = take(1, int, f"cell {c}")
        fl = take(m, int, f"cell {c}")
        if any(f < 0 or f >= nf for f in fl):
            raise MeshLoadError(f"{path}: cell {c} references a missing face", cell=c)
        cell_lists.append(fl)
    if pos != len(tokens):
        raise MeshLoadError(f"{path}: {len(tokens) - pos} trailing tokens after cell {nc - 1}")
    for f, (o, n) in enumerate(fcells):
        if not 0 <= o < nc or not -1 <= n < nc:
            raise MeshLoadError(f"{path}: face {f} has out-of-range adjacent cells ({o}, {n})")
    return _assemble(dim, verts, face_lists, fcells, cell_lists)


def save_mesh(mesh: PolyMesh, path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_faces} {mesh.n_cells}"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    for f in range(mesh.n_faces):
        nodes = mesh.nodes_of_face(f)
        o, n = mesh.face_cells[f]
        lines.append(f"{len(nodes)} {' '.join(map(str, nodes))} {o} {n}")
    for c in range(mesh.n_cells):
        fl = mesh.faces_of(c)
        lines.append(f"{len(fl)} {' '.join(map(str, fl))}")
    Path(path).write_text("\n".join(lines) + "\n")
