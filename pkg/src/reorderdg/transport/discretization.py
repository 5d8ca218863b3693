"""Precomputed quadrature tables and per-step coefficients for the kernels."""
from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from ..dgbasis import BasisSet, build_cubature, build_face_quadrature, interpolate_velocity
from ..mesh import PolyMesh
from ..pressure import gravity_vector

STATIC_FIELDS = (
    "vol", "cf_ptr", "cf_face", "face_owner", "face_nbr", "face_area", "max_faces",
    "vq_ptr", "vq_w", "vq_phi", "vq_grad", "fq_ptr", "fq_w", "fq_phi_o", "fq_phi_n",
    "chk_ptr", "chk_phi", "mass", "mean_w", "vq_pts",
)
STEP_FIELDS = (
    "phib", "acc_old", "bw", "mu_w", "mu_o", "vel", "gk", "face_v", "face_g", "face_T",
    "inj_w", "prod_q", "scale", "pc_s", "pc_v",
)

TransportData = namedtuple("TransportData", STATIC_FIELDS + STEP_FIELDS)

Params = namedtuple("Params", (
    "dt", "tol", "eps", "jump_tol", "max_it", "global_max_it", "max_sweeps", "max_ds", "max_degree_loops",
    "swr", "sor", "nw", "no", "cap", "reduce",
))


@dataclass(frozen=True)
class SolverSettings:
    """Transport solver options; defaults follow the documented tolerances."""

    tol: float = 1e-9
    max_it: int = 25
    global_max_it: int = 200
    max_sweeps: int = 50
    max_ds: float = 0.2
    eps: float = 1e-4
    jump_tol: float = 0.2
    order_reduction: bool = True
    max_degree_loops: int = 8

    def params(self, fluid, dt) -> Params:
        return Params(float(dt), float(self.tol), float(self.eps), float(self.jump_tol),
                      int(self.max_it), int(self.global_max_it), int(self.max_sweeps), float(self.max_ds),
                      int(self.max_degree_loops), float(fluid.swr), float(fluid.sor),
                      float(fluid.nw), float(fluid.no), bool(fluid.has_capillary),
                      bool(self.order_reduction))


def _shape_key(mesh, c):
    nodes = mesh.nodes_of(c)
    rel = mesh.vertices[nodes] - mesh.cell_centroids[c]
    faces = mesh.faces_of(c)
    return (tuple(np.round(rel.ravel(), 12)), tuple(np.round(mesh.face_centroids[faces].ravel()
                                                             - np.tile(mesh.cell_centroids[c],
                                                                       len(faces)), 12)))


class Discretization:
    """Quadrature tables of a mesh for dG(k); independent of the flow state."""

    def __init__(self, mesh: PolyMesh, degree: int):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.degree = degree
        self.basis = BasisSet.for_mesh(mesh, degree)
        self.nd = self.basis.n_dof
        self.tables = self._build()

    def _build(self):
        mesh, basis, k = self.mesh, self.basis, self.degree
        n, nd, d = mesh.n_cells, self.nd, mesh.dim
        prec = 2 * k
        cache = {}
        vq_ptr = [0]
        vq_w, vq_phi, vq_grad, vq_pts = [], [], [], []
        mass = np.zeros((n, nd, nd))
        mean_w = np.zeros((n, nd))
        chk_ptr = [0]
        chk_phi = []
        for c in range(n):
            key = _shape_key(mesh, c) if mesh.cartesian_shape is not None else None
            if key is not None and key in cache:
                rel_pts, wts = cache[key]
                pts = rel_pts + mesh.cell_centroids[c]
            else:
                rule = build_cubature(mesh, c, prec)
                pts, wts = rule.points, rule.abs_weights
                if key is not None:
                    cache[key] = (pts - mesh.cell_centroids[c], wts)
            wts = wts * (mesh.cell_volumes[c] / wts.sum())
            phi, grad = basis.eval(c, pts)
            vq_pts.append(pts)
            vq_w.append(wts)
            vq_phi.append(phi)
            vq_grad.append(grad)
            vq_ptr.append(vq_ptr[-1] + len(wts))
            mass[c] = (phi * wts[:, None]).T @ phi
            mean_w[c] = wts @ phi / mesh.cell_volumes[c]
            vphi, _ = basis.eval(c, mesh.vertices[mesh.nodes_of(c)])
            chk_phi.append(vphi)
            chk_ptr.append(chk_ptr[-1] + len(vphi))
        mean_w[:, 0] = 1.0

        nf = mesh.n_faces
        fq_ptr = [0]
        fq_w, fq_o, fq_n = [], [], []
        for f in range(nf):
            ow, nb = mesh.face_cells[f]
            if nb < 0:
                fq_ptr.append(fq_ptr[-1])
                continue
            rule = build_face_quadrature(mesh, f, prec)
            fq_w.append(rule.abs_weights)
            fq_o.append(basis.eval(ow, rule.points)[0])
            fq_n.append(basis.eval(nb, rule.points)[0])
            fq_ptr.append(fq_ptr[-1] + len(rule.weights))

        def cat(parts, shape):
            return np.concatenate(parts) if parts else np.zeros(shape)

        nfaces = np.diff(mesh.cell_ptr)
        return dict(
            vol=mesh.cell_volumes.astype(float),
            cf_ptr=mesh.cell_ptr.astype(np.int64),
            cf_face=mesh.cell_faces.astype(np.int64),
            face_owner=mesh.face_cells[:, 0].astype(np.int64),
            face_nbr=mesh.face_cells[:, 1].astype(np.int64),
            face_area=mesh.face_areas.astype(float),
            max_faces=int(nfaces.max()) if n else 0,
            vq_ptr=np.array(vq_ptr, dtype=np.int64),
            vq_w=cat(vq_w, (0,)),
            vq_phi=cat(vq_phi, (0, nd)),
            vq_grad=cat(vq_grad, (0, nd, d)),
            vq_pts=cat(vq_pts, (0, d)),
            fq_ptr=np.array(fq_ptr, dtype=np.int64),
            fq_w=cat(fq_w, (0,)),
            fq_phi_o=cat(fq_o, (0, nd)),
            fq_phi_n=cat(fq_n, (0, nd)),
            chk_ptr=np.array(chk_ptr, dtype=np.int64),
            chk_phi=cat(chk_phi, (0, nd)),
            mass=mass,
            mean_w=mean_w,
        )

    def means(self, s):
        return np.einsum("ck,ck->c", self.tables["mean_w"], s)

    def project(self, func):
        """L2 projection of ``func(points) -> values`` onto the cell bases."""
        t = self.tables
        s = np.zeros((self.mesh.n_cells, self.nd))
        for c in range(self.mesh.n_cells):
            a, b = t["vq_ptr"][c], t["vq_ptr"][c + 1]
            phi, w = t["vq_phi"][a:b], t["vq_w"][a:b]
            rhs = phi.T @ (w * func(t["vq_pts"][a:b]))
            s[c] = np.linalg.solve(t["mass"][c], rhs)
        return s

    def coefficients(self, rock, fluid, pstate, s_old, p_old, s_old_means, dt) -> TransportData:
        """Frozen per-step coefficients for a transport solve."""
        mesh, t = self.mesh, self.tables
        p = pstate.p
        pc, _ = fluid.capillary(s_old_means)
        pw, pw_old = p - pc, p_old - pc
        bw = fluid.b_w(pw)
        phib = rock.porosity(p) * bw
        phib_old = rock.porosity(p_old) * fluid.b_w(pw_old)
        acc_old = phib_old[:, None] * np.einsum("cjk,ck->cj", t["mass"], s_old)
        vel = interpolate_velocity(mesh, pstate.flux)
        gvec = gravity_vector(mesh.dim, fluid.gravity)
        drho = fluid.rho_w(pw) - fluid.rho_o(p)
        gk = rock.perm_tensor(mesh.dim) * drho[:, None] * gvec[None, :]
        inj_w = np.zeros(mesh.n_cells)
        prod_q = np.zeros(mesh.n_cells)
        for c, q, wf in zip(pstate.well_cells, pstate.well_rates, pstate.well_wfrac):
            if wf >= 0 and q > 0:
                inj_w[c] += bw[c] * wf * q
            else:
                prod_q[c] += q
        pc_s, pc_v = fluid.pc_arrays()
        return TransportData(
            **t,
            phib=phib, acc_old=acc_old, bw=bw, mu_w=fluid.visc_w(pw), mu_o=fluid.visc_o(p),
            vel=vel, gk=gk, face_v=pstate.flux.astype(float), face_g=pstate.grav.astype(float),
            face_T=pstate.trans.astype(float), inj_w=inj_w, prod_q=prod_q,
            scale=dt / (phib * t["vol"]), pc_s=np.asarray(pc_s, float),
            pc_v=np.asarray(pc_v, float),
        )
