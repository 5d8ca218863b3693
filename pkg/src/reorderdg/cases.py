"""Ready-made cases: quarter five-spot, channelized layer, Buckley-Leverett and a
gravity-segregation column."""
from __future__ import annotations

import numpy as np

from .driver import DAY, Case, Schedule
from .mesh import build_cartesian
from .petro import BAR, CENTIPOISE, FluidModel, RockProperties
from .pressure import WellSpec, peaceman_wi
from .transport import SolverSettings

MILLIDARCY = 9.869233e-16

__all__ = ["five_spot", "channel", "buckley_leverett", "gravity_column", "lognormal_perm",
           "channel_perm", "MILLIDARCY"]


def lognormal_perm(shape, mean_md=100.0, sigma=1.0, corr=2, seed=0):
    """Log-normal permeability [m^2] with a short box-filter correlation."""
    rng = np.random.default_rng(seed)
    field = rng.standard_normal(shape[::-1])
    if corr > 1:
        from scipy.ndimage import uniform_filter
        field = uniform_filter(field, size=corr, mode="reflect")
        field /= field.std()
    return (mean_md * MILLIDARCY * np.exp(sigma * field - 0.5 * sigma**2)).ravel()


def channel_perm(nx, ny, n_channels=3, high_md=1000.0, low_md=2.0, seed=1):
    """Sinuous high-permeability channels in a low-permeability background."""
    rng = np.random.default_rng(seed)
    x = (np.arange(nx) + 0.5) / nx
    y = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(x, y)
    perm = low_md * np.exp(0.3 * rng.standard_normal((ny, nx)))
    for k in range(n_channels):
        y0 = (k + 0.5) / n_channels
        amp = 0.12 + 0.06 * rng.random()
        freq = 1.0 + rng.random()
        phase = 2 * np.pi * rng.random()
        centre = y0 + amp * np.sin(2 * np.pi * freq * X + phase)
        width = 0.02 + 0.01 * rng.random()
        perm = np.where(np.abs(Y - centre) < width, high_md, perm)
    # a connecting channel along the diagonal so injector and producer communicate
    perm = np.where(np.abs(Y - X) < 0.02, high_md, perm)
    return perm.ravel() * MILLIDARCY


def _rate_for(pv, pv_total, days):
    return pv * pv_total / (days * DAY)


def five_spot(n=20, degree=0, block_size=1, mode="reordered", pv_injected=0.2, n_steps=20,
              length=200.0, seed=2, compressible=True, sigma=1.5, corr=3):
    """Quarter five-spot on an n x n layer with log-normal permeability."""
    mesh = build_cartesian(n, n, lx=length, ly=length)
    k = lognormal_perm((n, n), sigma=sigma, corr=corr, seed=seed)
    rock = RockProperties(np.full(mesh.n_cells, 0.2), np.column_stack([k, k]),
                          c_r=3e-5 / BAR if compressible else 0.0, p_ref=250 * BAR)
    fluid = FluidModel(mu_w=1.0 * CENTIPOISE, mu_o=3.0 * CENTIPOISE, swr=0.2, sor=0.2,
                       c_w=4e-5 / BAR if compressible else 0.0,
                       c_o=1e-4 / BAR if compressible else 0.0, p_ref=250 * BAR)
    pv = float(np.sum(rock.phi * mesh.cell_volumes))
    days = 100.0
    q = _rate_for(pv_injected, pv, days)
    wells = [
        WellSpec("INJ", [0], [peaceman_wi(mesh, rock, 0)], "injector", "rate", q),
        WellSpec("PROD", [mesh.n_cells - 1], [peaceman_wi(mesh, rock, mesh.n_cells - 1)],
                 "producer", "bhp", 275 * BAR),
    ]
    dt = days * DAY / n_steps
    sched = Schedule(tuple(dt * np.arange(1, n_steps + 1)), dt, dt_min=dt / 64, dt_max=dt,
                     growth=1.0)
    return Case(mesh, rock, fluid, wells, sched, sw_init=0.2, p_init=275 * BAR, degree=degree,
                mode=mode, block_size=block_size, name="five_spot")


def channel(n=60, degree=0, block_size=1, mode="reordered", pv_injected=0.2, n_steps=40,
            length=600.0, seed=1):
    """Channelized layer: water and rock incompressible, oil weakly compressible."""
    mesh = build_cartesian(n, n, lx=length, ly=length)
    k = channel_perm(n, n, seed=seed)
    rock = RockProperties(np.full(mesh.n_cells, 0.2), np.column_stack([k, k]))
    fluid = FluidModel(mu_w=2.85 * CENTIPOISE, mu_o=3.0 * CENTIPOISE, swr=0.2, sor=0.2,
                       c_o=1e-4 / BAR, p_ref=275 * BAR)
    pv = float(np.sum(rock.phi * mesh.cell_volumes))
    days = 200.0
    q = _rate_for(pv_injected, pv, days)
    wells = [
        WellSpec("INJ", [0], [peaceman_wi(mesh, rock, 0)], "injector", "rate", q),
        WellSpec("PROD", [mesh.n_cells - 1], [peaceman_wi(mesh, rock, mesh.n_cells - 1)],
                 "producer", "bhp", 275 * BAR),
    ]
    dt = days * DAY / n_steps
    sched = Schedule(tuple(dt * np.arange(1, n_steps + 1)), dt, dt_min=dt / 64, dt_max=dt,
                     growth=1.0)
    return Case(mesh, rock, fluid, wells, sched, sw_init=0.2, p_init=275 * BAR, degree=degree,
                mode=mode, block_size=block_size, name="channel")


def buckley_leverett(n=100, degree=0, pv_step=0.005, report_pv=(0.3, 0.7), mode="reordered",
                     order_reduction=True, length=100.0):
    """1D displacement: rate injector in the first cell, BHP producer in the last.

    ``pv_step`` sets the pore volumes injected per step (CFL number is
    roughly ``pv_step * n`` times the maximum fractional-flow slope).
    """
    mesh = build_cartesian(n, 1, lx=length, ly=1.0)
    rock = RockProperties.uniform(n, 2, phi=0.2, perm=100 * MILLIDARCY)
    fluid = FluidModel(mu_w=2.85 * CENTIPOISE, mu_o=3.0 * CENTIPOISE, swr=0.2, sor=0.2)
    pv = float(np.sum(rock.phi * mesh.cell_volumes))
    days = 100.0
    q = pv / (days * DAY)
    wells = [
        WellSpec("INJ", [0], [1e-12], "injector", "rate", q),
        WellSpec("PROD", [n - 1], [peaceman_wi(mesh, rock, n - 1, r_w=0.05)], "producer", "bhp",
                 275 * BAR),
    ]
    dt = pv_step * days * DAY
    times = tuple(sorted(p * days * DAY for p in report_pv))
    sched = Schedule(times, dt, dt_min=dt / 64, dt_max=dt, growth=1.0)
    settings = SolverSettings(order_reduction=order_reduction)
    return Case(mesh, rock, fluid, wells, sched, sw_init=0.2, p_init=275 * BAR, degree=degree,
                settings=settings, mode=mode, name="buckley_leverett")


def gravity_column(nz=50, degree=0, mode="reordered", height=10.0, days=60.0, n_steps=60):
    """Vertical column with water on top of oil and no wells."""
    mesh = build_cartesian(1, 1, nz, lx=1.0, ly=1.0, lz=height)
    rock = RockProperties.uniform(nz, 3, phi=0.2, perm=1000 * MILLIDARCY, c_r=1e-5 / BAR,
                                  p_ref=200 * BAR)
    fluid = FluidModel(mu_w=1.0 * CENTIPOISE, mu_o=1.0 * CENTIPOISE, swr=0.1, sor=0.1,
                       c_w=4e-5 / BAR, c_o=1e-4 / BAR, p_ref=200 * BAR, rho_w_s=1000.0,
                       rho_o_s=800.0)
    z = mesh.cell_centroids[:, 2]
    sw = np.where(z < height / 2, 0.9, 0.1)
    p0 = 200 * BAR + 900.0 * fluid.gravity * z
    dt = days * DAY / n_steps
    sched = Schedule(tuple(dt * np.arange(1, n_steps + 1)), dt, dt_min=dt / 256, dt_max=dt,
                     growth=1.0)
    return Case(mesh, rock, fluid, [], sched, sw_init=sw, p_init=p0, degree=degree, mode=mode,
                name="gravity_column")
