"""Legendre tensor bases on cell bounding boxes and cubature on polytopes.

Volume rules are built by moment fitting: choose ``n_dof`` points inside the
cell, evaluate the degree-k basis there and solve ``Psi w = b`` where ``b``
holds the basis moments.  The moments come from a fan subdivision of the cell
into simplices with collapsed-coordinate Gauss-Jacobi rules, which is also the
fallback when no well-conditioned point set is found.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import qr
from scipy.special import roots_jacobi, roots_legendre

from .mesh import PolyMesh

__all__ = [
    "legendre_eval",
    "n_dof",
    "exponents",
    "BasisSet",
    "basis_eval",
    "CubatureRule",
    "simplex_rule",
    "subdivision_rule",
    "build_cubature",
    "build_face_quadrature",
    "interpolate_velocity",
]

logger = logging.getLogger(__name__)


def legendre_eval(n: int, x):
    """Legendre polynomial of order ``n`` and its derivative at ``x``.

    Values follow Bonnet's recursion; derivatives use
    ``P'_{k+1} = P'_{k-1} + (2k+1) P_k``.
    """
    x = np.asarray(x, dtype=float)
    p_prev, p = np.ones_like(x), x.copy()
    d_prev, d = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, d_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return p, d


def n_dof(k: int, d: int) -> int:
    return math.comb(k + d, d)


@lru_cache(maxsize=None)
def exponents(k: int, d: int) -> np.ndarray:
    """Exponent tuples with total degree <= k, ordered by degree."""
    out = []
    for deg in range(k + 1):
        for e in itertools.product(range(deg + 1), repeat=d):
            if sum(e) == deg:
                out.append(e[::-1])
    out.sort(key=lambda e: (sum(e), [-v for v in e]))
    arr = np.array(out, dtype=np.int64).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def _eval_local(exps, center, half, x):
    x = np.atleast_2d(x)
    d = exps.shape[1]
    kmax = int(exps.max()) if exps.size else 0
    xi = (x - center) / half
    vals = np.empty((kmax + 1, x.shape[0], d))
    ders = np.empty_like(vals)
    for r in range(kmax + 1):
        vals[r], ders[r] = legendre_eval(r, xi)
    n = exps.shape[0]
    phi = np.ones((x.shape[0], n))
    grad = np.ones((x.shape[0], n, d))
    for j in range(n):
        for a in range(d):
            phi[:, j] *= vals[exps[j, a], :, a]
            for b in range(d):
                if a == b:
                    grad[:, j, b] *= ders[exps[j, a], :, a] / half[a]
                else:
                    grad[:, j, b] *= vals[exps[j, a], :, a]
    return phi, grad


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Degree-k Legendre tensor basis for every cell of a mesh."""

    degree: int
    dim: int
    exps: np.ndarray
    centers: np.ndarray
    half: np.ndarray

    @classmethod
    def for_mesh(cls, mesh: PolyMesh, degree: int) -> "BasisSet":
        if degree < 0:
            raise ValueError("basis degree must be non-negative")
        return cls(degree, mesh.dim, exponents(degree, mesh.dim),
                   mesh.cell_centroids.copy(), 0.5 * mesh.bbox_size)

    @property
    def n_dof(self) -> int:
        return self.exps.shape[0]

    def eval(self, cell: int, x):
        return _eval_local(self.exps, self.centers[cell], self.half[cell], x)


def basis_eval(basis: BasisSet, cell: int, x):
    """Values (npts, n_dof) and gradients (npts, n_dof, dim) of cell basis at ``x``."""
    return basis.eval(cell, x)


# ---------------------------------------------------------------------------
# simplex rules

@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int):
    """Rule on the unit reference simplex exact for total degree <= ``degree``.

    Returns barycentric-free reference points (n, dim) and weights summing to
    ``1/dim!``.
    """
    n = max(1, math.ceil((degree + 1) / 2))
    if dim == 1:
        x, w = roots_legendre(n)
        pts, wts = (0.5 * (x + 1))[:, None], 0.5 * w
    elif dim == 2:
        x1, w1 = roots_jacobi(n, 1.0, 0.0)
        x2, w2 = roots_legendre(n)
        t1, t2 = 0.5 * (x1 + 1), 0.5 * (x2 + 1)
        w1, w2 = w1 / 4.0, w2 / 2.0
        T1, T2 = np.meshgrid(t1, t2, indexing="ij")
        W = np.outer(w1, w2)
        pts = np.column_stack([T1.ravel(), (T2 * (1 - T1)).ravel()])
        wts = W.ravel()
    elif dim == 3:
        x1, w1 = roots_jacobi(n, 2.0, 0.0)
        x2, w2 = roots_jacobi(n, 1.0, 0.0)
        x3, w3 = roots_legendre(n)
        t1, t2, t3 = 0.5 * (x1 + 1), 0.5 * (x2 + 1), 0.5 * (x3 + 1)
        w1, w2, w3 = w1 / 8.0, w2 / 4.0, w3 / 2.0
        T1, T2, T3 = np.meshgrid(t1, t2, t3, indexing="ij")
        W = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
        pts = np.column_stack([T1.ravel(), ((1 - T1) * T2).ravel(),
                               ((1 - T1) * (1 - T2) * T3).ravel()])
        wts = W.ravel()
    else:
        raise ValueError(f"unsupported simplex dimension {dim}")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def _simplices_rule(simplices, degree):
    """Map the reference rule to each simplex (ns, d+1, d); weights absolute."""
    d = simplices.shape[2]
    ref_p, ref_w = simplex_rule(d, degree)
    v0 = simplices[:, 0, :]
    edges = simplices[:, 1:, :] - v0[:, None, :]
    det = np.linalg.det(edges)
    pts = v0[:, None, :] + np.einsum("qk,skd->sqd", ref_p, edges)
    wts = np.abs(det)[:, None] * ref_w[None, :]
    return pts.reshape(-1, d), wts.ravel()


def cell_simplices(mesh: PolyMesh, cell: int, apex=None):
    """Fan of simplices covering the cell, from ``apex`` (default: centroid)."""
    c0 = mesh.cell_centroids[cell] if apex is None else np.asarray(apex, dtype=float)
    out = []
    if mesh.dim == 2:
        for f, s in zip(mesh.faces_of(cell), mesh.signs_of(cell)):
            a, b = mesh.vertices[mesh.nodes_of_face(f)]
            if s < 0:
                a, b = b, a
            out.append((c0, a, b))
    else:
        for loop in mesh.oriented_face_loops(cell):
            p = mesh.vertices[loop]
            fc = p.mean(axis=0)
            for a, b in zip(p, np.roll(p, -1, axis=0)):
                out.append((c0, fc, a, b))
    return np.array(out, dtype=float)


def subdivision_rule(mesh: PolyMesh, cell: int, degree: int) -> "CubatureRule":
    """Simplex-subdivision rule for a cell (exact, but with many more points)."""
    pts, w = _simplices_rule(cell_simplices(mesh, cell), degree)
    total = float(w.sum())
    return CubatureRule(pts, w / total, total, degree, fitted=False)


def _inside(simplices, x, tol=1e-12):
    """Mask of points lying in at least one simplex of the fan."""
    inside = np.zeros(len(x), dtype=bool)
    for simp in simplices:
        A = (simp[1:] - simp[0]).T
        if abs(np.linalg.det(A)) < 1e-300:
            continue
        lam = np.linalg.solve(A, (x - simp[0]).T).T
        ok = np.all(lam >= -tol, axis=1) & (lam.sum(axis=1) <= 1 + tol)
        inside |= ok
    return inside


@dataclass(frozen=True, eq=False)
class CubatureRule:
    """Points with weights normalised by the region measure (sum of weights is 1)."""

    points: np.ndarray
    weights: np.ndarray
    measure: float
    precision: int
    fitted: bool = True

    @property
    def abs_weights(self) -> np.ndarray:
        return self.weights * self.measure

    def integrate(self, values) -> np.ndarray:
        """Integral of ``values`` sampled at the points, or of a callable ``f(points)``."""
        if callable(values):
            values = values(self.points)
        values = np.asarray(values, dtype=float)
        return self.measure * np.tensordot(self.weights, values, axes=(0, 0))


def _fit_rule(simplices, k, center, lo, hi, max_retries=3):
    d = simplices.shape[2]
    sub_p, sub_w = _simplices_rule(simplices, k)
    measure = float(sub_w.sum())
    if k == 0:
        return CubatureRule(np.asarray(center, dtype=float)[None, :].copy(), np.ones(1), measure, 0)
    exps = exponents(k, d)
    half = 0.5 * (hi - lo)
    phi_sub, _ = _eval_local(exps, center, half, sub_p)
    b = phi_sub.T @ sub_w / measure
    nd = exps.shape[0]
    diam = float(np.linalg.norm(hi - lo))

    def lattice(m):
        axes = [lo[a] + (np.arange(m) + 0.5) / m * (hi[a] - lo[a]) for a in range(d)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        direction = center - grid
        norm = np.linalg.norm(direction, axis=1)
        grid = grid + 1e-6 * diam * direction / np.where(norm > 0, norm, 1.0)[:, None]
        return grid[_inside(simplices, grid)]

    # Lattices of growing density first; thin slivers that a lattice misses
    # fall back to choosing among the interior points of the subdivision rule.
    pools = [lattice(m) for m in range(k + 1, k + 2 + max_retries)] + [sub_p]
    for cand in pools:
        if len(cand) < nd:
            continue
        psi, _ = _eval_local(exps, center, half, cand)
        _, _, piv = qr(psi.T, pivoting=True, mode="economic")
        sel = np.sort(piv[:nd])
        A = psi[sel].T
        cond = np.linalg.cond(A)
        if np.isfinite(cond) and cond < 1e8:
            w = np.linalg.solve(A, b)
            if np.max(np.abs(A @ w - b)) <= 1e-12 * max(1.0, np.max(np.abs(b))):
                return CubatureRule(cand[sel], w, measure, k)
    warnings.warn("moment fitting failed; using the simplex-subdivision rule", RuntimeWarning,
                  stacklevel=3)
    return CubatureRule(sub_p, sub_w / measure, measure, k, fitted=False)


def build_cubature(mesh: PolyMesh, cell: int, k: int) -> CubatureRule:
    """Moment-fitted volume rule for ``cell`` exact for polynomials of degree <= k."""
    simplices = cell_simplices(mesh, cell)
    return _fit_rule(simplices, k, mesh.cell_centroids[cell], mesh.bbox_lo[cell],
                     mesh.bbox_hi[cell])


def _face_frame(normal, origin, first):
    e1 = first - origin - np.dot(first - origin, normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return np.vstack([e1, e2])


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return roots_legendre(n)


def build_face_quadrature(mesh: PolyMesh, face: int, k: int) -> CubatureRule:
    """Surface rule on a face exact for polynomials of degree <= k."""
    nodes = mesh.nodes_of_face(face)
    pts = mesh.vertices[nodes]
    area = float(mesh.face_areas[face])
    if mesh.dim == 2:
        n = max(1, math.ceil((k + 1) / 2))
        x, w = _gauss_legendre(n)
        t = 0.5 * (x + 1)
        q = pts[0] + t[:, None] * (pts[1] - pts[0])
        return CubatureRule(q, 0.5 * w, area, k)
    fc = mesh.face_centroids[face]
    normal = mesh.face_normals[face]
    if k == 0:
        return CubatureRule(fc[None, :].copy(), np.ones(1), area, 0)
    diam = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) * 2
    offplane = np.abs((pts - fc) @ normal)
    if offplane.max() > 1e-10 * diam:
        vm = pts.mean(axis=0)
        tris = np.array([(vm, a, b) for a, b in zip(pts, np.roll(pts, -1, axis=0))])
        ref_p, ref_w = simplex_rule(2, k)
        q, w = [], []
        for tri in tris:
            e = tri[1:] - tri[0]
            jac = np.linalg.norm(np.cross(e[0], e[1]))
            q.append(tri[0] + ref_p @ e)
            w.append(jac * ref_w)
        q, w = np.vstack(q), np.concatenate(w)
        return CubatureRule(q, w / w.sum(), float(w.sum()), k, fitted=False)
    frame = _face_frame(normal, fc, pts[0])
    local = (pts - fc) @ frame.T
    c2 = np.zeros(2)
    tris = np.array([(c2, a, b) for a, b in zip(local, np.roll(local, -1, axis=0))])
    e1, e2 = tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if signed.sum() < 0:
        tris = tris[:, [0, 2, 1]]
    rule = _fit_rule(tris, k, c2, local.min(axis=0), local.max(axis=0))
    q3 = fc + rule.points @ frame
    return CubatureRule(q3, rule.weights, rule.measure, k, rule.fitted)


def interpolate_velocity(mesh: PolyMesh, flux, cell=None):
    """Constant cell velocity ``(1/|cell|) sum_f v_f (x_f - x_cell)``.

    ``flux`` is the signed owner->neighbor volumetric flux of every face;
    boundary entries are outward fluxes (zero for no-flow).
    """
    flux = np.asarray(flux, dtype=float)
    if cell is not None:
        f, sg = mesh.faces_of(cell), mesh.signs_of(cell)
        lever = mesh.face_centroids[f] - mesh.cell_centroids[cell]
        return ((sg * flux[f])[:, None] * lever).sum(0) / mesh.cell_volumes[cell]
    owner = np.repeat(np.arange(mesh.n_cells), np.diff(mesh.cell_ptr))
    f = mesh.cell_faces
    lever = mesh.face_centroids[f] - mesh.cell_centroids[owner]
    contrib = (mesh.cell_face_signs * flux[f])[:, None] * lever
    out = np.zeros((mesh.n_cells, mesh.dim))
    np.add.at(out, owner, contrib)
    return out / mesh.cell_volumes[:, None]
