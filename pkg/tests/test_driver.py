import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest

from reorderdg.cases import buckley_leverett, five_spot, gravity_column
from reorderdg.driver import DAY, RunReport, Schedule, run
from reorderdg.errors import ConfigurationError, RunAborted
from reorderdg.io import read_report
from reorderdg.petro import CapillaryTable, FluidModel
from reorderdg.pressure import WellSpec
from reorderdg.transport import SolverSettings


@pytest.mark.parametrize("kw, key", [
    (dict(report_times=()), "report_times"),
    (dict(report_times=(2.0, 1.0)), "report_times"),
    (dict(report_times=(0.0, 1.0)), "report_times"),
    (dict(dt_min=2.0), "dt_initial"),
    (dict(dt_max=0.5), "dt_initial"),
    (dict(growth=0.9), "growth"),
    (dict(cut=1.0), "cut"),
    (dict(well_periods=((5.0, []), (5.0, []))), "well_periods"),
])
def test_schedule_validation(kw, key):
    args = dict(report_times=(10.0,), dt_initial=1.0, dt_min=0.1, dt_max=5.0)
    args.update(kw)
    with pytest.raises(ConfigurationError) as err:
        Schedule(**args)
    assert err.value.key == key


def test_wells_switch_at_period_start():
    w = WellSpec("I", [0], [1.0], "injector", "rate", 1.0)
    s = Schedule((10.0,), 1.0, well_periods=((4.0, [w]),))
    assert s.wells_at(0.0, []) == []
    assert s.wells_at(4.0, []) == [w]


def test_case_validation():
    case = buckley_leverett(n=10)
    for attr, value, key in [("degree", 5, "degree"), ("mode", "fast", "mode"),
                             ("block_size", 0, "block_size")]:
        bad = dataclasses.replace(case, **{attr: value})
        with pytest.raises(ConfigurationError) as err:
            bad.validate()
        assert err.value.key == key
    bad = dataclasses.replace(case, wells=[WellSpec("X", [99], [1.0], "producer", "bhp", 1e7)])
    with pytest.raises(ConfigurationError):
        bad.validate()
    table = CapillaryTable([0.0, 1.0], [1e4, 0.0])
    cap = dataclasses.replace(case, degree=1, fluid=FluidModel(pc=table))
    with pytest.raises(ConfigurationError):
        cap.validate()


def _report(times, cuts):
    steps = [SimpleNamespace(time=t, water_cut=w) for t, w in zip(times, cuts)]
    return RunReport("x", "reordered", 0, steps, {}, None, None, 1.0)


def test_breakthrough_interpolates():
    rep = _report([1.0, 2.0, 3.0], [0.0, 0.2, 0.6])
    assert rep.breakthrough_time(0.5) == pytest.approx(2.75)
    assert rep.breakthrough_time(0.2) == pytest.approx(2.0)
    assert math.isnan(rep.breakthrough_time(0.9))
    np.testing.assert_array_equal(rep.times, [1.0, 2.0, 3.0])


def test_failed_steps_are_cut_and_retried():
    case = buckley_leverett(n=30, pv_step=0.2, report_pv=(0.6,))
    case.settings = SolverSettings(max_it=5)
    rep = run(case)
    assert rep.failures == 2
    assert rep.steps[0].dt == pytest.approx(5 * DAY)
    assert rep.times[-1] == pytest.approx(60 * DAY)


def test_run_aborts_below_minimum_step():
    case = buckley_leverett(n=30, pv_step=0.2, report_pv=(0.6,))
    case.settings = SolverSettings(max_it=2)
    case.schedule = dataclasses.replace(case.schedule, dt_min=0.9 * case.schedule.dt_initial)
    with pytest.raises(RunAborted, match="below minimum"):
        run(case)


def test_steps_land_on_report_times():
    case = buckley_leverett(n=20, pv_step=0.07, report_pv=(0.1, 0.25))
    rep = run(case)
    assert set(rep.snapshots) == {10 * DAY, 25 * DAY}
    assert max(r.dt for r in rep.steps) <= 7 * DAY * (1 + 1e-12)
    np.testing.assert_allclose(rep.snapshots[25 * DAY]["sw"], rep.final.means(
        __import__("reorderdg").transport.Discretization(case.mesh, 0)))


def test_injected_volume_and_mass_bookkeeping():
    case = buckley_leverett(n=40, pv_step=0.01, report_pv=(0.2,))
    rep = run(case)
    q = case.wells[0].target
    assert rep.steps[-1].cum_injected == pytest.approx(q * 20 * DAY, rel=1e-10)
    assert abs(rep.steps[-1].cum_mass_error) <= 1e-8 * rep.pore_volume
    # incompressible 1D: every step's injected water stays or leaves by the producer
    assert rep.series("water_cut")[0] == pytest.approx(0.0, abs=1e-12)


def test_runs_are_deterministic():
    a = run(five_spot(n=8, n_steps=4, pv_injected=0.05))
    b = run(five_spot(n=8, n_steps=4, pv_injected=0.05))
    np.testing.assert_array_equal(a.final.s, b.final.s)
    np.testing.assert_array_equal(a.pressure, b.pressure)


def test_no_wells_conserves_and_segregates():
    case = gravity_column(nz=16, n_steps=20)
    rep = run(case)
    means = rep.snapshots[case.schedule.end_time]["sw"]
    s0 = np.where(case.mesh.cell_centroids[:, 2] < 5.0, 0.9, 0.1)

    def water(p, s):
        return np.sum(case.rock.porosity(p) * case.fluid.b_w(p) * case.mesh.cell_volumes * s)

    # the closed column keeps its water up to the Newton tolerance, and the
    # audited error accounts for the difference
    change = water(rep.pressure, means) - water(case.p_init, s0)
    assert abs(change) <= 1e-8 * rep.pore_volume * len(rep.steps)
    assert change == pytest.approx(rep.steps[-1].cum_mass_error, rel=1e-3, abs=1e-13)
    # z points down, so water collects at the high-index end
    assert np.all(np.diff(means) >= -1e-9)


def test_compare_mode_reports_discrepancy(tmp_path):
    case = five_spot(n=6, n_steps=3, pv_injected=0.05, degree=1)
    rep = run(case, mode="compare", out_dir=tmp_path)
    assert np.all(rep.series("discrepancy") <= 1e-6)
    assert np.all(rep.series("global_iterations") >= 1)
    version, rows = read_report(tmp_path / "five_spot.csv")
    assert version == 1 and len(rows) == 3
    assert float(rows[-1]["time"]) == pytest.approx(rep.times[-1])
    assert {"INJ_rate", "PROD_bhp", "water_cut"} <= set(rows[0])
    assert sorted(p.name for p in tmp_path.glob("*.vtk")) == [
        "five_spot_0000.vtk", "five_spot_0001.vtk", "five_spot_0002.vtk", "five_spot_0003.vtk"]
