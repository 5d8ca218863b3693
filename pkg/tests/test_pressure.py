import math

import numpy as np
import pytest

from reorderdg.cases import five_spot
from reorderdg.errors import ConfigurationError
from reorderdg.mesh import build_cartesian
from reorderdg.petro import BAR, FluidModel, RockProperties
from reorderdg.pressure import (WellSpec, gravity_vector, peaceman_wi, solve_pressure,
                                tpfa_flux, transmissibilities, weighting_factors)

DAY = 86400.0


def test_weighting_factors():
    inc = FluidModel()
    ww, wo = weighting_factors(inc, np.array([1e7, 2e7]))
    np.testing.assert_array_equal(ww, 1.0)
    np.testing.assert_array_equal(wo, 1.0)
    f = FluidModel(b_o_ref=0.9)
    _, wo = weighting_factors(f, np.array([5e6]))
    assert wo[0] == pytest.approx(1 / 0.9)
    comp = FluidModel(c_w=1e-9, c_o=2e-9, p_ref=1e7)
    p = np.array([3e7])
    ww, wo = weighting_factors(comp, p)
    assert ww[0] == pytest.approx(1 / (1 + 1e-9 * 2e7))
    assert wo[0] == pytest.approx(1 / (1 + 2e-9 * 2e7))


def test_weighting_factor_rejects_negative_shrinkage():
    f = FluidModel(c_o=1e-6, p_ref=0.0)
    with pytest.raises(ConfigurationError):
        weighting_factors(f, np.array([-2e6]))


def test_transmissibility_harmonic_average():
    mesh = build_cartesian(2, 1, lx=4.0, ly=3.0)
    rock = RockProperties(np.full(2, 0.2), np.array([[1.0, 1.0], [3.0, 3.0]]))
    T = transmissibilities(mesh, rock)
    f = mesh.interior_faces[0]
    # half distances 1 m, face area 3 m
    assert T[f] == pytest.approx(3.0 / (1.0 / 1.0 + 1.0 / 3.0))
    assert tpfa_flux(1.0, 2.0, 1.0) == 1.0
    assert tpfa_flux(2.0, 1.0, 3.0, mobility=0.5, head=1.0) == pytest.approx(-1.0)


def _two_cell_unit():
    mesh = build_cartesian(2, 1, lx=2.0, ly=1.0)
    rock = RockProperties.uniform(2, 2, phi=0.2, perm=1.0)
    fluid = FluidModel(mu_w=1.0, mu_o=1.0)
    return mesh, rock, fluid


def test_two_cell_darcy_by_hand():
    mesh, rock, fluid = _two_cell_unit()
    assert transmissibilities(mesh, rock)[mesh.interior_faces[0]] == pytest.approx(1.0)
    wi = 1e6
    wells = [WellSpec("L", [0], [wi], "injector", "bhp", 2.0),
             WellSpec("R", [1], [wi], "producer", "bhp", 1.0)]
    ps = solve_pressure(mesh, rock, fluid, wells, np.ones(2), np.full(2, 1.5), 1.0)
    # three resistances in series: 1/wi + 1/T + 1/wi
    v = 1.0 / (1.0 + 2.0 / wi)
    np.testing.assert_allclose(ps.p, [2.0 - v / wi, 1.0 + v / wi], rtol=1e-12)
    assert ps.flux[mesh.interior_faces[0]] == pytest.approx(v, rel=1e-10)
    assert ps.well_rate("L") == pytest.approx(v, rel=1e-10)
    assert ps.well_rate("R") == pytest.approx(-v, rel=1e-10)


def test_equilibrium_gives_zero_flux():
    mesh = build_cartesian(5, 4)
    rock = RockProperties.uniform(mesh.n_cells, 2, c_r=1e-9, p_ref=1e7)
    fluid = FluidModel(c_w=1e-9, c_o=1e-9, p_ref=1e7)
    ps = solve_pressure(mesh, rock, fluid, [], np.full(mesh.n_cells, 0.3),
                        np.full(mesh.n_cells, 1e7), DAY)
    np.testing.assert_array_equal(ps.flux, 0.0)


def test_five_spot_incompressible_balance():
    case = five_spot(compressible=False)
    n = case.mesh.n_cells
    ps = solve_pressure(case.mesh, case.rock, case.fluid, case.wells, np.full(n, 0.2),
                        np.full(n, 275 * BAR), 5 * DAY)
    qin, qout = ps.well_rate("INJ"), ps.well_rate("PROD")
    assert qin > 0 > qout
    assert abs(qin + qout) <= 1e-8 * qin
    # per-cell volume balance with incompressible fluids
    div = np.zeros(n)
    inner = case.mesh.interior_faces
    o, nb = case.mesh.face_cells[inner].T
    np.add.at(div, o, ps.flux[inner])
    np.add.at(div, nb, -ps.flux[inner])
    np.add.at(div, ps.well_cells, -ps.well_rates)
    assert np.max(np.abs(div)) <= 1e-8 * qin


def test_compressible_cellwise_water_conservation():
    n = 10
    mesh = build_cartesian(n, 1, lx=100.0, ly=10.0)
    rock = RockProperties.uniform(n, 2, phi=0.25, perm=1e-13, c_r=1e-9, p_ref=1e7)
    fluid = FluidModel(mu_w=1e-3, mu_o=2e-3, c_w=5e-10, c_o=2e-9, p_ref=1e7)
    wells = [WellSpec("I", [0], [1e-12], "injector", "rate", 1e-4),
             WellSpec("P", [n - 1], [1e-12], "producer", "bhp", 1e7)]
    p_n = np.full(n, 1e7)
    dt = DAY
    s = np.ones(n)
    ps = solve_pressure(mesh, rock, fluid, wells, s, p_n, dt)
    assert ps.iterations >= 2
    # independent water-mass residual with upstream shrinkage factors
    p = ps.p
    bw = fluid.b_w(p)
    acc = mesh.cell_volumes * (rock.porosity(p) * bw - rock.porosity(p_n) * fluid.b_w(p_n)) / dt
    inner = mesh.interior_faces
    o, nb = mesh.face_cells[inner].T
    v = ps.flux_w[inner]
    up = np.where(v > 0, o, nb)
    mass = bw[up] * v
    r = acc.copy()
    np.add.at(r, o, mass)
    np.add.at(r, nb, -mass)
    np.add.at(r, ps.well_cells, -bw[ps.well_cells] * ps.well_rates)
    scale = dt / (rock.porosity(p_n) * mesh.cell_volumes)
    assert np.max(np.abs(r) * scale) <= 1e-8
    assert ps.well_rate("I") == pytest.approx(1e-4)


def test_hydrostatic_column_has_no_flow():
    nz = 20
    mesh = build_cartesian(1, 1, nz, lz=20.0)
    rock = RockProperties.uniform(nz, 3, phi=0.2, perm=1e-12)
    fluid = FluidModel(rho_w_s=1000.0)
    z = mesh.cell_centroids[:, 2]
    p0 = 1e7 + 1000.0 * fluid.gravity * z
    wells = [WellSpec("top", [0], [1e-10], "producer", "bhp", float(p0[0]))]
    ps = solve_pressure(mesh, rock, fluid, wells, np.ones(nz), p0, DAY)
    assert np.max(np.abs(ps.flux)) < 1e-14
    np.testing.assert_allclose(ps.p, p0, rtol=1e-12)
    np.testing.assert_array_equal(gravity_vector(3, 9.8), [0, 0, 9.8])
    np.testing.assert_array_equal(gravity_vector(2, 9.8), [0, 0])


def test_singular_setup_rejected():
    mesh = build_cartesian(3, 1)
    rock = RockProperties.uniform(3, 2)
    fluid = FluidModel()
    wells = [WellSpec("I", [0], [1.0], "injector", "rate", 1.0),
             WellSpec("P", [2], [1.0], "producer", "rate", 1.0)]
    with pytest.raises(ConfigurationError):
        solve_pressure(mesh, rock, fluid, wells, np.ones(3), np.zeros(3), 1.0)
    with pytest.raises(ConfigurationError):
        solve_pressure(mesh, rock, fluid, [], np.ones(3), np.zeros(3), 1.0)


def test_rate_split_follows_index():
    mesh = build_cartesian(3, 1)
    rock = RockProperties.uniform(3, 2, perm=1e-12)
    fluid = FluidModel()
    wells = [WellSpec("I", [0, 1], [1.0, 3.0], "injector", "rate", 4e-3),
             WellSpec("P", [2], [1e-10], "producer", "bhp", 1e6)]
    ps = solve_pressure(mesh, rock, fluid, wells, np.ones(3), np.full(3, 1e6), 1.0)
    inj = ps.well_rates[ps.well_index == 0]
    np.testing.assert_allclose(inj, [1e-3, 3e-3])


def test_peaceman_isotropic_square():
    mesh = build_cartesian(1, 1, lx=10.0, ly=10.0)
    rock = RockProperties.uniform(1, 2, perm=2e-13)
    r_o = 0.28 * math.sqrt(200.0) / 2.0
    expected = 2 * math.pi * 2e-13 * 1.0 / math.log(r_o / 0.1)
    assert peaceman_wi(mesh, rock, 0) == pytest.approx(expected)
    assert r_o == pytest.approx(0.198 * 10.0, rel=1e-2)


@pytest.mark.parametrize("kw", [dict(cells=[]), dict(kind="observer"), dict(control="thp"),
                                dict(wi=[0.0]), dict(target=-1.0, control="rate"),
                                dict(water_fraction=1.5)])
def test_wellspec_validation(kw):
    args = dict(name="W", cells=[0], wi=[1.0], kind="injector", control="bhp", target=1.0)
    args.update(kw)
    with pytest.raises(ConfigurationError):
        WellSpec(**args)
