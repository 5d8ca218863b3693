"""TPFA pressure equation for the sequential splitting.

The pressure equation is the sum of the water and oil mass residuals, each
divided by its shrinkage factor, so that new-time saturations drop out.
Saturations and capillary pressure are frozen at the start of the step and
the oil pressure is found by Newton's method with an analytic Jacobian.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .errors import ConfigurationError, StepFailure
from .mesh import PolyMesh
from .petro import FluidModel, RockProperties

__all__ = [
    "WellSpec",
    "PressureState",
    "weighting_factors",
    "transmissibilities",
    "tpfa_flux",
    "gravity_vector",
    "peaceman_wi",
    "solve_pressure",
]

FLUX_ZERO = 1e-12


@dataclass(frozen=True)
class WellSpec:
    """A well with one or more completions.

    ``control`` is ``"bhp"`` (``target`` in Pa) or ``"rate"`` (``target`` is
    the total reservoir-volume rate in m^3/s, always positive; ``kind`` decides
    whether it is injected or withdrawn).
    """

    name: str
    cells: tuple
    wi: tuple
    kind: str = "producer"
    control: str = "bhp"
    target: float = 0.0
    water_fraction: float = 1.0

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        wi = tuple(float(w) for w in np.atleast_1d(self.wi))
        if not cells:
            raise ConfigurationError(f"well {self.name!r} has no completions", key="cells")
        if len(wi) == 1 and len(cells) > 1:
            wi = wi * len(cells)
        if len(wi) != len(cells):
            raise ConfigurationError(f"well {self.name!r}: one WI per completion", key="wi")
        if self.kind not in ("injector", "producer"):
            raise ConfigurationError(f"well {self.name!r}: unknown kind {self.kind!r}", key="kind")
        if self.control not in ("bhp", "rate"):
            raise ConfigurationError(f"well {self.name!r}: unknown control {self.control!r}",
                                     key="control")
        if self.control == "bhp" and any(w <= 0 for w in wi):
            raise ConfigurationError(f"well {self.name!r}: BHP control needs positive WI", key="wi")
        if self.control == "rate" and self.target < 0:
            raise ConfigurationError(f"well {self.name!r}: rate must be non-negative", key="rate")
        if not 0.0 <= self.water_fraction <= 1.0:
            raise ConfigurationError(f"well {self.name!r}: water fraction outside [0, 1]",
                                     key="water_fraction")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "wi", wi)


@dataclass
class PressureState:
    """Converged pressure solution and the flux ingredients for transport.

    Face arrays are per face (boundary entries zero) and signed owner to
    neighbor.  ``well_cells``/``well_rates`` list every completion with its
    total reservoir-volume rate (positive into the reservoir) and
    ``well_wfrac`` holds the injected water fraction, or -1 for production.
    """

    p: np.ndarray
    flux: np.ndarray
    flux_w: np.ndarray
    flux_o: np.ndarray
    grav: np.ndarray
    trans: np.ndarray
    well_cells: np.ndarray
    well_rates: np.ndarray
    well_wfrac: np.ndarray
    well_index: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    well_names: tuple = field(default_factory=tuple)

    def well_rate(self, name):
        k = self.well_names.index(name)
        return float(self.well_rates[self.well_index == k].sum())


def weighting_factors(fluid: FluidModel, p, s_w=None, pc=None):
    """Per-cell weights (1/b_w, 1/b_o) that eliminate the new-time saturations."""
    p = np.asarray(p, dtype=float)
    pw = p if pc is None else p - pc
    bw, bo = fluid.b_w(pw), fluid.b_o(p)
    if np.any(bw <= 0) or np.any(bo <= 0):
        raise ConfigurationError("shrinkage factor became non-positive; pressure outside the "
                                 "admissible range", key="compressibility")
    return 1.0 / bw, 1.0 / bo


def gravity_vector(dim, g):
    """Gravity acts along the last axis of 3D meshes (depth grows with z)."""
    out = np.zeros(dim)
    if dim == 3:
        out[2] = g
    return out


def transmissibilities(mesh: PolyMesh, rock: RockProperties) -> np.ndarray:
    """Two-point transmissibility per face; zero on boundary faces."""
    perm = rock.perm_tensor(mesh.dim)
    fc = mesh.face_cells
    trans = np.zeros(mesh.n_faces)

    def half(cells, faces):
        c = mesh.face_centroids[faces] - mesh.cell_centroids[cells]
        n = mesh.face_normals[faces]
        kn = np.abs(np.sum(c * perm[cells] * n, axis=1))
        return mesh.face_areas[faces] * kn / np.sum(c * c, axis=1)

    inner = mesh.interior_faces
    ti = half(fc[inner, 0], inner)
    tj = half(fc[inner, 1], inner)
    trans[inner] = ti * tj / (ti + tj)
    return trans


def tpfa_flux(trans, p_i, p_j, mobility=1.0, head=0.0):
    """Volumetric flux ``T * lambda * (p_i - p_j + head)`` from cell i to cell j."""
    return trans * mobility * (p_i - p_j + head)


def peaceman_wi(mesh: PolyMesh, rock: RockProperties, cell: int, r_w=0.1, skin=0.0,
                thickness=1.0) -> float:
    """Peaceman index for a vertical well through an axis-aligned cell."""
    dx, dy = mesh.bbox_size[cell][:2]
    k = rock.perm_tensor(mesh.dim)[cell]
    h = mesh.bbox_size[cell][2] if mesh.dim == 3 else thickness
    kx, ky = k[0], k[1]
    r_o = 0.28 * math.sqrt(math.sqrt(ky / kx) * dx**2 + math.sqrt(kx / ky) * dy**2) / (
        (ky / kx) ** 0.25 + (kx / ky) ** 0.25)
    if r_o <= r_w:
        raise ConfigurationError("well radius exceeds Peaceman equivalent radius", key="r_w")
    return 2.0 * math.pi * math.sqrt(kx * ky) * h / (math.log(r_o / r_w) + skin)


def _completions(wells):
    cells, wi, idx = [], [], []
    for k, w in enumerate(wells):
        cells += list(w.cells)
        wi += list(w.wi)
        idx += [k] * len(w.cells)
    return (np.array(cells, dtype=np.int64), np.array(wi, dtype=float),
            np.array(idx, dtype=np.int64))


def is_singular_setup(rock, fluid, wells):
    compressible = rock.c_r != 0 or fluid.c_w != 0 or fluid.c_o != 0
    return not compressible and not any(w.control == "bhp" for w in wells)


def solve_pressure(mesh: PolyMesh, rock: RockProperties, fluid: FluidModel, wells, s_w, p_n,
                   dt, *, p_guess=None, tol=1e-8, max_it=25, trans=None) -> PressureState:
    """Newton solve of the weighted pressure equation with frozen saturations.

    ``s_w`` are cell-mean water saturations and ``p_n`` the oil pressure at
    the previous time level.
    """
    if dt <= 0:
        raise ConfigurationError("time step must be positive", key="dt")
    wells = list(wells)
    if is_singular_setup(rock, fluid, wells):
        raise ConfigurationError("incompressible system without a BHP-controlled well has no "
                                 "pressure datum", key="wells")
    n = mesh.n_cells
    s_w = np.asarray(s_w, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    p = (p_n if p_guess is None else np.asarray(p_guess, dtype=float)).copy()
    trans = transmissibilities(mesh, rock) if trans is None else trans

    inner = mesh.interior_faces
    ci, cj = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    T = trans[inner]
    gvec = gravity_vector(mesh.dim, fluid.gravity)
    gdx = (mesh.cell_centroids[cj] - mesh.cell_centroids[ci]) @ gvec
    vol = mesh.cell_volumes

    pc, _ = fluid.capillary(s_w)
    s_o = 1.0 - s_w
    pw_n = p_n - pc
    mass_w_n = rock.porosity(p_n) * fluid.b_w(pw_n) * s_w
    mass_o_n = rock.porosity(p_n) * fluid.b_o(p_n) * s_o
    kr = fluid.relperm(np.clip(s_w, 0.0, 1.0))

    wcells, wi, widx = _completions(wells)
    bhp_mask = np.array([wells[k].control == "bhp" for k in widx], dtype=bool)
    p_bh = np.array([wells[k].target if wells[k].control == "bhp" else 0.0 for k in widx])
    wfrac = np.array([wells[k].water_fraction if wells[k].kind == "injector" else -1.0
                      for k in widx])

    # rate wells: split the target over completions with WI * lambda_t at time n
    rate_q = np.zeros(len(widx))
    lt_n = kr.krw / fluid.visc_w(pw_n) + kr.kro / fluid.visc_o(p_n)
    for k, w in enumerate(wells):
        if w.control != "rate":
            continue
        sel = widx == k
        share = wi[sel] * np.maximum(lt_n[wcells[sel]], 1e-30)
        sign = 1.0 if w.kind == "injector" else -1.0
        rate_q[sel] = sign * w.target * share / share.sum()

    def phase(pp, b, db, visc, dvisc, rho_s, krel):
        lam = krel / visc(pp)
        dlam = -lam * dvisc(pp) / visc(pp)
        bb, dbb = b(pp), db(pp)
        rho, drho = rho_s * bb, rho_s * dbb
        head = 0.5 * (rho[ci] + rho[cj]) * gdx
        dphi = pp[ci] - pp[cj] + head
        up_i = dphi > 0
        up = np.where(up_i, ci, cj)
        bl = bb[up] * lam[up]
        dbl = dbb[up] * lam[up] + bb[up] * dlam[up]
        mass = T * bl * dphi
        dmi = T * (np.where(up_i, dbl, 0.0) * dphi + bl * (1.0 + 0.5 * drho[ci] * gdx))
        dmj = T * (np.where(up_i, 0.0, dbl) * dphi + bl * (-1.0 + 0.5 * drho[cj] * gdx))
        vol_flux = T * lam[up] * dphi
        return mass, dmi, dmj, bb, dbb, vol_flux, lam, dlam

    def assemble(p):
        pw = p - pc
        phi, dphi = rock.porosity(p), rock.dporosity(p)
        res = np.zeros(n)
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        out = {}
        lam_t = np.zeros(n)
        dlam_t = np.zeros(n)
        for name, pp, b, db, visc, dvisc, rho_s, krel, mass_n in (
                ("w", pw, fluid.b_w, fluid.db_w, fluid.visc_w, fluid.dvisc_w, fluid.rho_w_s,
                 kr.krw, mass_w_n),
                ("o", p, fluid.b_o, fluid.db_o, fluid.visc_o, fluid.dvisc_o, fluid.rho_o_s,
                 kr.kro, mass_o_n)):
            mass, dmi, dmj, bb, dbb, vflux, lam, dlam = phase(pp, b, db, visc, dvisc, rho_s, krel)
            out[name] = vflux
            lam_t += lam
            dlam_t += dlam
            res -= vol * mass_n / bb / dt
            diag += vol * mass_n * dbb / bb**2 / dt
            np.add.at(res, ci, mass / bb[ci])
            np.add.at(res, cj, -mass / bb[cj])
            np.add.at(diag, ci, dmi / bb[ci] - mass * dbb[ci] / bb[ci] ** 2)
            np.add.at(diag, cj, -dmj / bb[cj] + mass * dbb[cj] / bb[cj] ** 2)
            rows += [ci, cj]
            cols += [cj, ci]
            vals += [dmj / bb[ci], -dmi / bb[cj]]
        res += vol * phi / dt
        diag += vol * dphi / dt
        q = rate_q.copy()
        dq = np.zeros(len(widx))
        if len(widx):
            lt = lam_t[wcells]
            dp_w = p_bh - p[wcells]
            q = np.where(bhp_mask, wi * lt * dp_w, q)
            dq = np.where(bhp_mask, wi * (dlam_t[wcells] * dp_w - lt), 0.0)
            np.add.at(res, wcells, -q)
            np.add.at(diag, wcells, -dq)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        J = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        return res, J, out, q

    scale = dt / (rock.porosity(p_n) * vol)
    it = 0
    while True:
        res, J, out, q = assemble(p)
        cnv = float(np.max(np.abs(res) * scale)) if n else 0.0
        if cnv <= tol:
            break
        if it >= max_it:
            raise StepFailure(f"pressure Newton did not converge in {max_it} iterations "
                              f"(residual {cnv:.3e})", stage="pressure")
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dp = spsolve(J, -res)
            except MatrixRankWarning as exc:
                raise ConfigurationError("singular pressure system", key="wells") from exc
        if not np.all(np.isfinite(dp)):
            raise StepFailure("pressure update is not finite", stage="pressure")
        p = p + dp
        it += 1

    flux = np.zeros(mesh.n_faces)
    flux_w = np.zeros(mesh.n_faces)
    flux_o = np.zeros(mesh.n_faces)
    flux_w[inner] = out["w"]
    flux_o[inner] = out["o"]
    flux[inner] = out["w"] + out["o"]
    vmax = np.max(np.abs(flux)) if flux.size else 0.0
    flux[np.abs(flux) <= FLUX_ZERO * vmax] = 0.0
    pw = p - pc
    grav = np.zeros(mesh.n_faces)
    drho = 0.5 * (fluid.rho_w(pw[ci]) + fluid.rho_w(pw[cj])) - 0.5 * (
        fluid.rho_o(p[ci]) + fluid.rho_o(p[cj]))
    grav[inner] = T * drho * gdx
    return PressureState(p=p, flux=flux, flux_w=flux_w, flux_o=flux_o, grav=grav, trans=trans,
                         well_cells=wcells, well_rates=q, well_wfrac=wfrac, well_index=widx,
                         iterations=it, residual=cnv,
                         well_names=tuple(w.name for w in wells))
