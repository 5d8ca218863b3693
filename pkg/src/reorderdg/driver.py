"""Time stepping for the sequential pressure / graph / transport splitting."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, RunAborted, StepFailure
from .fluxgraph import build_graph, condense_and_sort, dump_debug
from .io import CsvReporter, write_vtk
from .mesh import PolyMesh
from .petro import BAR, FluidModel, RockProperties
from .pressure import PressureState, is_singular_setup, solve_pressure, transmissibilities
from .transport import (
    Discretization,
    SolverSettings,
    TransportState,
    solve_global_newton,
    transport_step,
)

__all__ = ["Schedule", "Case", "StepRecord", "RunReport", "run", "compare_mode",
           "water_mass_audit", "vertex_values"]

logger = logging.getLogger(__name__)

MODES = ("reordered", "global", "compare")
DAY = 86400.0


@dataclass(frozen=True)
class Schedule:
    """Report times and time-step control (all in seconds).

    ``well_periods`` optionally switches well sets: a list of
    ``(start_time, [WellSpec, ...])`` sorted by start time.
    """

    report_times: tuple
    dt_initial: float
    dt_min: float = 1e-3
    dt_max: float = math.inf
    growth: float = 1.25
    cut: float = 0.5
    well_periods: tuple = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.report_times)
        if not times:
            raise ConfigurationError("schedule needs at least one report time", key="report_times")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("report times must be positive and strictly increasing",
                                     key="report_times")
        if not (0 < self.dt_min <= self.dt_initial <= self.dt_max):
            raise ConfigurationError("need 0 < dt_min <= dt_initial <= dt_max", key="dt_initial")
        if self.growth < 1.0:
            raise ConfigurationError("growth factor must be >= 1", key="growth")
        if not 0.0 < self.cut < 1.0:
            raise ConfigurationError("cut factor must lie in (0, 1)", key="cut")
        starts = [float(s) for s, _ in self.well_periods]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("well periods must have increasing start times",
                                     key="well_periods")
        object.__setattr__(self, "report_times", times)

    @property
    def end_time(self) -> float:
        return self.report_times[-1]

    def wells_at(self, t, default):
        wells = default
        for start, ws in self.well_periods:
            if t + 1e-9 * max(1.0, abs(t)) >= start:
                wells = ws
        return list(wells)


@dataclass
class Case:
    """Everything needed for a run."""

    mesh: PolyMesh
    rock: RockProperties
    fluid: FluidModel
    wells: list
    schedule: Schedule
    sw_init: object = 0.0
    p_init: object = 100 * BAR
    degree: int = 0
    settings: SolverSettings = field(default_factory=SolverSettings)
    mode: str = "reordered"
    block_size: int = 1
    name: str = "case"

    def validate(self):
        if self.degree not in (0, 1, 2, 3):
            raise ConfigurationError("dG degree must be 0 or 1 (2 and 3 are experimental)",
                                     key="degree")
        if self.degree > 0 and self.fluid.has_capillary:
            raise ConfigurationError("capillary pressure is only supported with dG(0)",
                                     key="degree")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown solver mode {self.mode!r}", key="mode")
        if self.block_size < 1:
            raise ConfigurationError("block size must be >= 1", key="block_size")
        s = self.settings
        if min(s.tol, s.eps, s.jump_tol, s.max_ds) <= 0 or min(s.max_it, s.max_sweeps) < 1:
            raise ConfigurationError("solver tolerances and limits must be positive", key="tol")
        for w in self.wells:
            for c in w.cells:
                if not 0 <= c < self.mesh.n_cells:
                    raise ConfigurationError(f"well {w.name!r} completion {c} outside the mesh",
                                             key="cells")
        if is_singular_setup(self.rock, self.fluid, self.wells):
            raise ConfigurationError("incompressible system without a BHP-controlled well has "
                                     "no pressure datum", key="wells")


@dataclass
class StepRecord:
    step: int
    time: float
    dt: float
    pressure_iterations: int
    n_components: int
    n_cycles: int
    max_cycle_size: int
    mean_cycle_size: float
    active_cells: int
    total_iterations: int
    max_iterations: int
    mean_iterations: float
    zero_iteration_fraction: float
    max_sweeps: int
    reduced_cells: int
    mass_error: float
    cum_mass_error: float
    min_sw: float
    max_sw: float
    min_vertex_sw: float
    max_vertex_sw: float
    injected: float
    cum_injected: float
    water_cut: float
    well_rates: dict
    well_bhp: dict
    global_iterations: int = -1
    discrepancy: float = float("nan")
    transport_seconds: float = 0.0
    reference_seconds: float = 0.0
    iterations: np.ndarray | None = field(default=None, repr=False)

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "step", "time", "dt", "pressure_iterations", "n_components", "n_cycles",
            "max_cycle_size", "mean_cycle_size", "active_cells", "total_iterations",
            "max_iterations", "mean_iterations", "zero_iteration_fraction", "max_sweeps",
            "reduced_cells", "mass_error", "cum_mass_error", "min_sw", "max_sw", "min_vertex_sw",
            "max_vertex_sw", "injected",
            "cum_injected", "water_cut", "global_iterations", "discrepancy",
            "transport_seconds", "reference_seconds")}
        for name, q in self.well_rates.items():
            out[f"{name}_rate"] = q
            out[f"{name}_bhp"] = self.well_bhp[name]
        return out


@dataclass
class RunReport:
    case_name: str
    mode: str
    degree: int
    steps: list
    snapshots: dict
    final: TransportState
    pressure: np.ndarray
    pore_volume: float
    failures: int = 0
    wall_time: float = 0.0

    def series(self, key):
        return np.array([getattr(r, key) for r in self.steps])

    @property
    def times(self):
        return self.series("time")

    def breakthrough_time(self, threshold=0.5):
        """First time the producers' water cut reaches ``threshold`` (nan if never).

        Linearly interpolated between the bracketing step ends.
        """
        t_prev, w_prev = 0.0, 0.0
        for r in self.steps:
            if r.water_cut >= threshold:
                if r.water_cut == w_prev:
                    return r.time
                return t_prev + (threshold - w_prev) / (r.water_cut - w_prev) * (r.time - t_prev)
            t_prev, w_prev = r.time, r.water_cut
        return float("nan")


def initial_state(disc: Discretization, sw) -> TransportState:
    if callable(sw):
        return TransportState.from_function(disc, sw)
    arr = np.asarray(sw, dtype=float)
    if arr.ndim == 0:
        return TransportState.uniform(disc, float(arr))
    state = TransportState.uniform(disc, 0.0)
    state.s[:, 0] = arr
    return state


def initial_pressure(case: Case) -> np.ndarray:
    p = case.p_init
    if callable(p):
        return np.asarray(p(case.mesh.cell_centroids), dtype=float)
    return np.broadcast_to(np.asarray(p, dtype=float), (case.mesh.n_cells,)).copy()


def water_mass_audit(D, disc, state_n_s, state, P) -> float:
    """Water mass change minus net sources over a step, from dofs alone.

    Interior face fluxes cancel in pairs, so a converged conservative step
    leaves only the nonlinear solver residual.
    """
    t = disc.tables
    mean_new = disc.means(state.s)
    m_new = np.sum(D.phib * D.vol * mean_new)
    m_old = np.sum(D.acc_old[:, 0])
    src = np.sum(D.inj_w)
    prod = np.nonzero(D.prod_q)[0]
    if prod.size:
        for c in prod:
            a, b = t["vq_ptr"][c], t["vq_ptr"][c + 1]
            sq = t["vq_phi"][a:b] @ state.s[c]
            fw = _frac_flow_scalar(sq, D.mu_w[c], D.mu_o[c], P)
            src += D.bw[c] * D.prod_q[c] / D.vol[c] * np.sum(t["vq_w"][a:b] * fw)
    return float(m_new - m_old - P.dt * src)


def vertex_values(disc: Discretization, state: TransportState) -> np.ndarray:
    """Saturation of every cell's polynomial at the cell's vertices (flattened)."""
    t = disc.tables
    owner = np.repeat(np.arange(state.s.shape[0]), np.diff(t["chk_ptr"]))
    return np.einsum("qk,qk->q", t["chk_phi"], state.s[owner])


def _frac_flow_scalar(s, mu_w, mu_o, P):
    den = 1.0 - P.swr - P.sor
    se = np.clip((s - P.swr) / den, 0.0, 1.0)
    lw = se ** P.nw / mu_w
    lo = (1.0 - se) ** P.no / mu_o
    tot = lw + lo
    return np.where(tot > 0, lw / np.where(tot > 0, tot, 1.0), 0.0)


def _produced_fraction(disc, state, ps, fluid, pc):
    """Water fraction of each cell's sink, averaged over the volume quadrature
    exactly as the transport residual does (equals f_w of the mean in dG(0))."""
    t = disc.tables
    mu_w, mu_o = fluid.visc_w(ps.p - pc), fluid.visc_o(ps.p)
    fw = np.zeros(state.s.shape[0])
    params = SolverSettings().params(fluid, 1.0)
    for c in np.unique(ps.well_cells):
        a, b = t["vq_ptr"][c], t["vq_ptr"][c + 1]
        sq = t["vq_phi"][a:b, :state.nact[c]] @ state.s[c, :state.nact[c]]
        w = t["vq_w"][a:b]
        fw[c] = np.sum(w * _frac_flow_scalar(sq, mu_w[c], mu_o[c], params)) / w.sum()
    return fw


def _well_report(case, ps: PressureState, disc, state, wells):
    rates, bhp = {}, {}
    means = np.clip(disc.means(state.s), 0.0, 1.0)
    kr = case.fluid.relperm(means)
    pc, _ = case.fluid.capillary(means)
    lam_w = kr.krw / case.fluid.visc_w(ps.p - pc)
    lam_o = kr.kro / case.fluid.visc_o(ps.p)
    fw = _produced_fraction(disc, state, ps, case.fluid, pc)
    q_prod = q_prod_w = 0.0
    for k, w in enumerate(wells):
        sel = ps.well_index == k
        cells, q = ps.well_cells[sel], ps.well_rates[sel]
        rates[w.name] = float(q.sum())
        if w.control == "bhp":
            bhp[w.name] = w.target / BAR
        else:
            lt = lam_w[cells] + lam_o[cells]
            wi = np.asarray(w.wi)
            with np.errstate(divide="ignore", invalid="ignore"):
                est = ps.p[cells] + q / (wi * lt)
            bhp[w.name] = float(np.mean(est)) / BAR if np.all(np.isfinite(est)) else float("nan")
        if w.kind == "producer":
            q_prod += -q.sum()
            q_prod_w += -(q * fw[cells]).sum()
    cut = q_prod_w / q_prod if q_prod > 0 else 0.0
    injected = float(ps.well_rates[ps.well_rates > 0].sum())
    return rates, bhp, cut, injected


def run(case: Case, *, mode=None, out_dir=None, log_every=0, debug_graph=False) -> RunReport:
    """Run a case and return the per-step records and report-time snapshots."""
    mode = case.mode if mode is None else mode
    case.mode = mode
    case.validate()
    t_wall = time.perf_counter()
    mesh, rock, fluid, sched = case.mesh, case.rock, case.fluid, case.schedule
    disc = Discretization(mesh, case.degree)
    state = initial_state(disc, case.sw_init)
    p = initial_pressure(case)
    trans = transmissibilities(mesh, rock)
    pore_volume = float(np.sum(rock.porosity(p) * mesh.cell_volumes))
    out = Path(out_dir) if out_dir is not None else None
    reporter = CsvReporter(out / f"{case.name}.csv") if out is not None else None
    if out is not None:
        _snapshot_vtk(out, case, disc, state, p, 0)

    t, dt = 0.0, sched.dt_initial
    steps, snapshots = [], {}
    cum_mass = cum_inj = 0.0
    failures = 0
    report_idx = 0
    step_no = 0
    try:
        while report_idx < len(sched.report_times):
            target = sched.report_times[report_idx]
            dt_try = min(dt, target - t)
            if target - t - dt_try < 1e-9 * max(1.0, target):
                dt_try = target - t
            wells = sched.wells_at(t, case.wells)
            try:
                rec, state_new, ps = _one_step(case, disc, state, p, dt_try, wells, trans, mode)
            except StepFailure as exc:
                failures += 1
                dt = dt_try * sched.cut
                logger.info("step at t=%.4g failed in %s stage (%s); dt -> %.4g", t,
                            exc.stage, exc, dt)
                if dt < sched.dt_min:
                    raise RunAborted(f"time step {dt:.3e} s below minimum {sched.dt_min:.3e} s "
                                     f"at t={t:.6g} s; last failure: {exc}") from exc
                continue
            step_no += 1
            t += dt_try
            cum_mass += rec["mass_error"]
            cum_inj += rec["injected"] * dt_try
            record = StepRecord(step=step_no, time=t, dt=dt_try, cum_mass_error=cum_mass,
                                cum_injected=cum_inj, **rec)
            steps.append(record)
            if reporter is not None:
                reporter.write(record.row())
            if log_every and step_no % log_every == 0:
                logger.info("step %d t=%.4g dt=%.3g its=%d", step_no, t, dt_try,
                            record.total_iterations)
            state, p = state_new, ps.p
            if abs(t - target) <= 1e-9 * max(1.0, target):
                t = target
                snapshots[target] = {"p": p.copy(), "s": state.s.copy(),
                                     "sw": disc.means(state.s), "nact": state.nact.copy()}
                if out is not None:
                    _snapshot_vtk(out, case, disc, state, p, report_idx + 1)
                    if debug_graph:
                        g = build_graph(mesh, ps, fluid)
                        dump_debug(condense_and_sort(g), g,
                                   out / f"{case.name}_graph_{report_idx + 1:04d}", disc.nd)
                report_idx += 1
            dt = min(dt_try * sched.growth, sched.dt_max) if dt_try >= dt else dt
    finally:
        if reporter is not None:
            reporter.close()
    return RunReport(case.name, mode, case.degree, steps, snapshots, state, p, pore_volume,
                     failures, time.perf_counter() - t_wall)


def _one_step(case, disc, state, p, dt, wells, trans, mode):
    mesh, rock, fluid, settings = case.mesh, case.rock, case.fluid, case.settings
    means = disc.means(state.s)
    ps = solve_pressure(mesh, rock, fluid, wells, np.clip(means, 0.0, 1.0), p, dt, p_guess=p,
                        trans=trans)
    D = disc.coefficients(rock, fluid, ps, state.s, p, means, dt)
    P = settings.params(fluid, dt)
    graph = ordering = None
    global_its, discrepancy = -1, float("nan")
    t_transport = t_reference = 0.0
    tic = time.perf_counter()
    if mode in ("reordered", "compare"):
        graph = build_graph(mesh, ps, fluid)
        ordering = condense_and_sort(graph)
        new, stats = transport_step(D, P, ordering, graph, state, case.block_size)
        t_transport = time.perf_counter() - tic
        if mode == "compare":
            ref, gstats = solve_global_newton(D, P, state)
            t_reference = time.perf_counter() - tic - t_transport
            global_its = gstats.global_iterations
            discrepancy = float(np.max(np.abs(ref.s - new.s))) if new.s.size else 0.0
    else:
        new, stats = solve_global_newton(D, P, state)
        t_transport = time.perf_counter() - tic
        global_its = stats.global_iterations
    new_means = disc.means(new.s)
    eps = settings.eps
    if settings.order_reduction and (np.any(new_means < -eps) or np.any(new_means > 1 + eps)):
        raise StepFailure("cell mean saturation left the admissible range", stage="transport")
    audit = water_mass_audit(D, disc, state.s, new, P)
    verts = vertex_values(disc, new)
    rates, bhp, cut, injected = _well_report(case, ps, disc, new, wells)
    iters = stats.iterations
    n = max(1, iters.size)
    ostats = ordering.stats if ordering is not None else {
        "n_components": 1, "n_cycles": 1, "max_cycle_size": mesh.n_cells,
        "mean_cycle_size": float(mesh.n_cells)}
    rec = dict(
        pressure_iterations=ps.iterations, **ostats,
        active_cells=stats.active_cells, total_iterations=stats.total_iterations,
        max_iterations=stats.max_iterations, mean_iterations=stats.mean_iterations,
        zero_iteration_fraction=float(np.count_nonzero(iters == 0) / n),
        max_sweeps=stats.max_sweeps, reduced_cells=stats.reduced_cells,
        mass_error=audit, min_sw=float(new_means.min()), max_sw=float(new_means.max()),
        min_vertex_sw=float(verts.min()), max_vertex_sw=float(verts.max()),
        injected=injected, water_cut=cut, well_rates=rates, well_bhp=bhp,
        global_iterations=global_its, discrepancy=discrepancy, transport_seconds=t_transport,
        reference_seconds=t_reference, iterations=iters.copy(),
    )
    return rec, new, ps


def _snapshot_vtk(out, case, disc, state, p, idx):
    write_vtk(out / f"{case.name}_{idx:04d}.vtk", case.mesh, {
        "pressure_bar": p / BAR,
        "sw": disc.means(state.s),
        "active_dofs": state.nact,
    }, title=f"{case.name} report {idx}")


def compare_mode(case: Case, **kw) -> RunReport:
    """Reordered run that also solves every step with global Newton for comparison."""
    return run(case, mode="compare", **kw)
