"""Rock and fluid properties for a compressible water/oil system.

Densities, porosity and viscosities are linearised around a reference
pressure.  Relative permeabilities are Corey curves with residual saturations,
and capillary pressure is a monotone piecewise-linear table in S_w.

Public functions are vectorised numpy.  The ``corey`` and ``pc_eval``
scalars are compiled kernels reused by the transport solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._jit import njit
from .errors import ConfigurationError, DomainError, SingularityError

__all__ = [
    "RockProperties",
    "FluidModel",
    "CapillaryTable",
    "relperm",
    "mobility",
    "frac_flow",
    "corey",
    "pc_eval",
]

CENTIPOISE = 1e-3
BAR = 1e5


@njit
def corey(s, swr, sor, nw, no):
    """Corey curves at scalar ``s``: (krw, dkrw/ds, kro, dkro/ds)."""
    den = 1.0 - swr - sor
    se = (s - swr) / den
    if se <= 0.0:
        krw = 0.0
        dkrw = 0.0
        kro = 1.0
        dkro = 0.0 if se < 0.0 else -no / den
    elif se >= 1.0:
        krw = 1.0
        dkrw = 0.0 if se > 1.0 else nw / den
        kro = 0.0
        dkro = 0.0
    else:
        krw = se ** nw
        dkrw = nw * se ** (nw - 1.0) / den
        kro = (1.0 - se) ** no
        dkro = -no * (1.0 - se) ** (no - 1.0) / den
    return krw, dkrw, kro, dkro


@njit
def pc_eval(s, table_s, table_pc):
    """Piecewise-linear capillary pressure with flat extrapolation."""
    n = table_s.shape[0]
    if n == 0:
        return 0.0, 0.0
    if s <= table_s[0]:
        return table_pc[0], 0.0
    if s >= table_s[n - 1]:
        return table_pc[n - 1], 0.0
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if table_s[mid] <= s:
            lo = mid
        else:
            hi = mid
    slope = (table_pc[hi] - table_pc[lo]) / (table_s[hi] - table_s[lo])
    return table_pc[lo] + slope * (s - table_s[lo]), slope


@dataclass(frozen=True)
class CapillaryTable:
    """P_cow(S_w) [Pa] as a monotone non-increasing piecewise-linear table."""

    sw: np.ndarray
    pc: np.ndarray

    def __post_init__(self):
        sw = np.asarray(self.sw, dtype=float)
        pc = np.asarray(self.pc, dtype=float)
        if sw.ndim != 1 or sw.shape != pc.shape or sw.size < 2:
            raise ConfigurationError("capillary table needs two equal-length columns with >= 2 rows",
                                     key="pc_table")
        if np.any(np.diff(sw) <= 0):
            raise ConfigurationError("capillary table saturations must be strictly increasing",
                                     key="pc_table")
        if np.any(np.diff(pc) > 0):
            raise ConfigurationError("capillary pressure must be non-increasing in S_w",
                                     key="pc_table")
        object.__setattr__(self, "sw", sw)
        object.__setattr__(self, "pc", pc)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        val = np.interp(s, self.sw, self.pc)
        idx = np.clip(np.searchsorted(self.sw, s, side="right") - 1, 0, self.sw.size - 2)
        slope = np.diff(self.pc)[idx] / np.diff(self.sw)[idx]
        inside = (s > self.sw[0]) & (s < self.sw[-1])
        return val, np.where(inside, slope, 0.0)

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.pc == self.pc[0]))

    @classmethod
    def from_csv(cls, path, pressure_unit=BAR):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 1] * pressure_unit)


@dataclass(frozen=True)
class RockProperties:
    """Per-cell porosity and diagonal permeability with linear rock compressibility."""

    phi: np.ndarray
    perm: np.ndarray
    c_r: float = 0.0
    p_ref: float = 0.0

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        perm = np.asarray(self.perm, dtype=float)
        if perm.ndim == 1:
            perm = perm[:, None]
        if np.any(phi <= 0) or np.any(phi > 1):
            raise ConfigurationError("porosity must lie in (0, 1]", key="porosity")
        if np.any(perm <= 0):
            raise ConfigurationError("permeability must be positive", key="permeability")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "perm", perm)

    @classmethod
    def uniform(cls, n_cells, dim, phi=0.2, perm=1e-13, c_r=0.0, p_ref=0.0):
        perm = np.broadcast_to(np.asarray(perm, dtype=float), (dim,))
        return cls(np.full(n_cells, phi), np.tile(perm, (n_cells, 1)), c_r, p_ref)

    def perm_tensor(self, dim):
        """Diagonal permeabilities as an (N, dim) array."""
        if self.perm.shape[1] == dim:
            return self.perm
        if self.perm.shape[1] == 1:
            return np.repeat(self.perm, dim, axis=1)
        return self.perm[:, :dim]

    def porosity(self, p):
        return self.phi * (1.0 + self.c_r * (p - self.p_ref))

    def dporosity(self, p):
        return self.phi * self.c_r * np.ones_like(np.asarray(p, dtype=float))


class RelPerm(NamedTuple):
    krw: np.ndarray
    kro: np.ndarray
    dkrw: np.ndarray
    dkro: np.ndarray


class Mobility(NamedTuple):
    lam_w: np.ndarray
    lam_o: np.ndarray
    dlam_w_ds: np.ndarray
    dlam_o_ds: np.ndarray
    dlam_w_dp: np.ndarray
    dlam_o_dp: np.ndarray


class FracFlow(NamedTuple):
    f_w: np.ndarray
    f_o: np.ndarray
    df_w: np.ndarray
    df_o: np.ndarray


@dataclass(frozen=True)
class FluidModel:
    """Two-phase water/oil fluid; pressures in Pa, viscosities in Pa*s.

    ``r_s`` and ``r_v`` are kept at zero: no mass transfer between phases.
    """

    mu_w: float = 1e-3
    mu_o: float = 1e-3
    c_mu_w: float = 0.0
    c_mu_o: float = 0.0
    b_w_ref: float = 1.0
    b_o_ref: float = 1.0
    c_w: float = 0.0
    c_o: float = 0.0
    p_ref: float = 0.0
    rho_w_s: float = 1000.0
    rho_o_s: float = 800.0
    swr: float = 0.0
    sor: float = 0.0
    nw: float = 2.0
    no: float = 2.0
    pc: CapillaryTable | None = None
    gravity: float = 9.80665
    eps: float = 1e-4
    r_s: float = field(default=0.0, init=False)
    r_v: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.mu_w <= 0 or self.mu_o <= 0:
            raise ConfigurationError("viscosities must be positive", key="mu")
        if self.b_w_ref <= 0 or self.b_o_ref <= 0:
            raise ConfigurationError("reference shrinkage factors must be positive", key="b_ref")
        if not (0 <= self.swr and 0 <= self.sor and self.swr + self.sor < 1):
            raise ConfigurationError("need swr, sor >= 0 and swr + sor < 1", key="swr")
        if self.nw <= 0 or self.no <= 0:
            raise ConfigurationError("Corey exponents must be positive", key="nw")

    @property
    def has_capillary(self) -> bool:
        return self.pc is not None and not self.pc.is_constant

    def pc_arrays(self):
        if self.pc is None:
            return np.zeros(0), np.zeros(0)
        return self.pc.sw, self.pc.pc

    def capillary(self, sw):
        if self.pc is None:
            z = np.zeros_like(np.asarray(sw, dtype=float))
            return z, z
        return self.pc(sw)

    # pressure-dependent properties --------------------------------------
    def b_w(self, p):
        return self.b_w_ref * (1.0 + self.c_w * (p - self.p_ref))

    def b_o(self, p):
        return self.b_o_ref * (1.0 + self.c_o * (p - self.p_ref))

    def db_w(self, p):
        return self.b_w_ref * self.c_w + 0.0 * np.asarray(p, dtype=float)

    def db_o(self, p):
        return self.b_o_ref * self.c_o + 0.0 * np.asarray(p, dtype=float)

    def visc_w(self, p):
        return self.mu_w * (1.0 + self.c_mu_w * (p - self.p_ref))

    def visc_o(self, p):
        return self.mu_o * (1.0 + self.c_mu_o * (p - self.p_ref))

    def dvisc_w(self, p):
        return self.mu_w * self.c_mu_w + 0.0 * np.asarray(p, dtype=float)

    def dvisc_o(self, p):
        return self.mu_o * self.c_mu_o + 0.0 * np.asarray(p, dtype=float)

    def rho_w(self, p):
        return self.rho_w_s * self.b_w(p)

    def rho_o(self, p):
        return self.rho_o_s * self.b_o(p)

    # saturation-dependent properties -------------------------------------
    def relperm(self, sw):
        return relperm(self, sw)

    def mobility(self, sw, p):
        return mobility(self, sw, p)

    def frac_flow(self, sw, p):
        return frac_flow(self, sw, p)


def _check_range(fluid: FluidModel, sw):
    sw = np.asarray(sw, dtype=float)
    if np.any(sw < -fluid.eps) or np.any(sw > 1.0 + fluid.eps) or np.any(np.isnan(sw)):
        bad = sw[(sw < -fluid.eps) | (sw > 1.0 + fluid.eps) | np.isnan(sw)].ravel()[0]
        raise DomainError(f"water saturation {bad!r} outside [-{fluid.eps}, 1+{fluid.eps}]")
    return sw


def relperm(fluid: FluidModel, sw) -> RelPerm:
    """Corey relative permeabilities and their S_w derivatives."""
    sw = _check_range(fluid, sw)
    den = 1.0 - fluid.swr - fluid.sor
    se_raw = (sw - fluid.swr) / den
    se = np.clip(se_raw, 0.0, 1.0)
    krw = se ** fluid.nw
    kro = (1.0 - se) ** fluid.no
    with np.errstate(divide="ignore", invalid="ignore"):
        dkrw = np.where((se_raw > 0) & (se_raw <= 1), fluid.nw * se ** (fluid.nw - 1.0) / den, 0.0)
        dkro = np.where((se_raw >= 0) & (se_raw < 1),
                        -fluid.no * (1.0 - se) ** (fluid.no - 1.0) / den, 0.0)
    return RelPerm(krw, kro, dkrw, dkro)


def mobility(fluid: FluidModel, sw, p) -> Mobility:
    """Phase mobilities k_r/mu with derivatives in S_w and p."""
    kr = relperm(fluid, sw)
    mw, mo = fluid.visc_w(p), fluid.visc_o(p)
    lw, lo = kr.krw / mw, kr.kro / mo
    return Mobility(lw, lo, kr.dkrw / mw, kr.dkro / mo,
                    -lw * fluid.dvisc_w(p) / mw, -lo * fluid.dvisc_o(p) / mo)


def frac_flow(fluid: FluidModel, sw, p) -> FracFlow:
    """Fractional flows; f_w + f_o == 1 exactly."""
    m = mobility(fluid, sw, p)
    tot = m.lam_w + m.lam_o
    if np.any(tot <= 0):
        raise SingularityError("total mobility vanishes: both phases immobile")
    fw = m.lam_w / tot
    fo = 1.0 - fw
    dfw = (m.dlam_w_ds * m.lam_o - m.lam_w * m.dlam_o_ds) / tot ** 2
    return FracFlow(fw, fo, dfw, -dfw)
