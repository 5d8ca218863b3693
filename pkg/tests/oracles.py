"""Reference computations that share no code with the package.

* polygon moments via Green's theorem with Gauss-Legendre on each edge
* polyhedron moments via the divergence theorem, faces fanned into triangles
  and integrated with a tensor Gauss-Legendre rule on the collapsed square
* strongly connected components by brute-force reachability
* the Buckley-Leverett self-similar solution by the Welge tangent construction
"""
from __future__ import annotations

import itertools

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.spatial import ConvexHull


def monomials(dim, degree):
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]


def polygon_moment(verts, exps, n_gauss=8):
    """int_P x^a y^b dA = 1/(a+1) * closed integral of x^(a+1) y^b dy (CCW loop)."""
    a, b = exps
    t, w = leggauss(n_gauss)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = 0.0
    for p0, p1 in zip(verts, np.roll(verts, -1, axis=0)):
        x = p0[0] + t * (p1[0] - p0[0])
        y = p0[1] + t * (p1[1] - p0[1])
        total += np.sum(w * x ** (a + 1) * y**b) * (p1[1] - p0[1])
    return total / (a + 1)


def _triangle_rule(n):
    """Collapsed-square Gauss rule on the reference triangle (area 1/2)."""
    g, wg = leggauss(n)
    g, wg = 0.5 * (g + 1), 0.5 * wg
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(wg, wg, indexing="ij")
    xi = u.ravel()
    eta = (v * (1 - u)).ravel()
    return np.column_stack([xi, eta]), (wu * wv * (1 - u)).ravel()


def polyhedron_moment(faces, exps, n_gauss=6):
    """int_V x^a y^b z^c dV via the divergence theorem on the x component.

    ``faces`` are vertex arrays ordered counter-clockwise seen from outside.
    """
    a, b, c = exps
    ref, rw = _triangle_rule(n_gauss)
    total = 0.0
    for poly in faces:
        poly = np.asarray(poly, float)
        for k in range(1, len(poly) - 1):
            p0, p1, p2 = poly[0], poly[k], poly[k + 1]
            cross = np.cross(p1 - p0, p2 - p0)
            pts = p0 + ref[:, :1] * (p1 - p0) + ref[:, 1:] * (p2 - p0)
            f = pts[:, 0] ** (a + 1) * pts[:, 1] ** b * pts[:, 2] ** c
            total += np.sum(rw * f) * cross[0]
    return total / (a + 1)


def random_convex_polygon(rng, n_points=None):
    n_points = n_points or int(rng.integers(4, 12))
    pts = rng.random((n_points, 2))
    hull = ConvexHull(pts)
    return pts[hull.vertices]


def _merge_coplanar(points, hull):
    """Group hull triangles by facet plane and return ordered outward loops."""
    groups = {}
    for simplex, eq in zip(hull.simplices, hull.equations):
        key = tuple(np.round(eq, 9))
        groups.setdefault(key, []).append(simplex)
    faces = []
    for key, simplices in groups.items():
        normal = np.array(key[:3])
        idx = np.unique(np.concatenate(simplices))
        pts = points[idx]
        centre = pts.mean(axis=0)
        e1 = pts[0] - centre
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(normal, e1)
        ang = np.arctan2((pts - centre) @ e2, (pts - centre) @ e1)
        faces.append(idx[np.argsort(ang)])
    return faces


def random_convex_polyhedron(rng, n_points=None):
    """Vertices and outward CCW face loops (indices) of a random convex hull."""
    n_points = n_points or int(rng.integers(6, 14))
    pts = rng.random((n_points, 3))
    hull = ConvexHull(pts)
    used = np.unique(hull.simplices)
    remap = -np.ones(n_points, dtype=int)
    remap[used] = np.arange(used.size)
    faces = _merge_coplanar(pts, hull)
    return pts[used], [remap[f] for f in faces]


def reachability(n, edges):
    reach = np.eye(n, dtype=bool)
    for i, j in edges:
        reach[i, j] = True
    for k in range(n):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    return reach


def brute_force_scc(n, edges):
    """Partition as a set of frozensets: i ~ j iff each reaches the other."""
    reach = reachability(n, edges)
    mutual = reach & reach.T
    return {frozenset(np.flatnonzero(mutual[i]).tolist()) for i in range(n)}


def buckley_leverett_profile(x, t_pv, swr, sor, mu_w, mu_o, nw=2.0, no=2.0, length=1.0):
    """Water saturation at positions ``x`` after ``t_pv`` injected pore volumes.

    Initial state ``swr`` everywhere, pure water injected at x = 0.
    """
    span = 1.0 - swr - sor
    m = mu_w / mu_o

    def f(se):
        return se**nw / (se**nw + m * (1 - se) ** no)

    def df(se, h=1e-7):
        return (f(min(se + h, 1.0)) - f(max(se - h, 0.0))) / (min(se + h, 1.0) - max(se - h, 0.0))

    se_shock = brentq(lambda s: f(s) - s * df(s), 1e-6, 1 - 1e-9)
    speed = lambda se: df(se) / span * t_pv * length  # noqa: E731
    x_front = speed(se_shock)
    out = np.full(np.shape(x), swr, dtype=float)
    for k, xk in enumerate(np.atleast_1d(x)):
        if xk < x_front:
            if xk <= speed(1.0 - 1e-12):
                se = 1.0
            else:
                se = brentq(lambda s: speed(s) - xk, se_shock, 1.0 - 1e-12)
            out.flat[k] = swr + span * se
    return out, x_front, se_shock, f(se_shock)
