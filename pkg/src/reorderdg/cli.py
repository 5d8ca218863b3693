"""Command-line entry point: ``reorderdg run CASE [options]``.

Case files are INI documents.  Units are SI except pressure (bar),
viscosity (cP), compressibility (1/bar), permeability (mD) and times in the
``[schedule]`` section (days).  The grammar is documented in the README.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from .cases import MILLIDARCY, channel_perm, lognormal_perm
from .driver import DAY, Case, Schedule, run
from .errors import ConfigurationError, MeshLoadError, ReorderDGError
from .mesh import build_cartesian, load_mesh
from .petro import BAR, CENTIPOISE, CapillaryTable, FluidModel, RockProperties
from .pressure import WellSpec, peaceman_wi
from .transport import SolverSettings

__all__ = ["main", "load_case", "CaseFileError"]

logger = logging.getLogger("reorderdg")

SECTIONS = ("mesh", "rock", "fluid", "wells", "schedule", "solver", "initial")
MODES = ("reordered", "global", "compare")


class CaseFileError(ConfigurationError):
    pass


class _Section:
    """Typed, consumption-tracking view of one INI section."""

    def __init__(self, name, items, base_dir):
        self.name = name
        self._items = dict(items)
        self._used = set()
        self.base_dir = base_dir

    def key(self, k):
        return f"{self.name}.{k}"

    def has(self, k):
        return k in self._items

    def raw(self, k, default=None):
        if k not in self._items:
            if default is None:
                raise CaseFileError(f"missing required key '{self.key(k)}'", key=self.key(k))
            return default
        self._used.add(k)
        return self._items[k].strip()

    def float(self, k, default=None):
        val = self.raw(k, default if default is None else str(default))
        try:
            return float(val)
        except ValueError:
            raise CaseFileError(f"'{self.key(k)}' must be a number, got {val!r}",
                                key=self.key(k)) from None

    def int(self, k, default=None):
        x = self.float(k, default)
        if x != int(x):
            raise CaseFileError(f"'{self.key(k)}' must be an integer", key=self.key(k))
        return int(x)

    def bool(self, k, default=None):
        val = self.raw(k, None if default is None else ("yes" if default else "no")).lower()
        if val in ("1", "yes", "true", "on"):
            return True
        if val in ("0", "no", "false", "off"):
            return False
        raise CaseFileError(f"'{self.key(k)}' must be yes/no, got {val!r}", key=self.key(k))

    def path(self, k):
        p = Path(self.raw(k))
        return p if p.is_absolute() else self.base_dir / p

    def check_consumed(self):
        extra = sorted(set(self._items) - self._used)
        if extra:
            raise CaseFileError(f"unknown key '{self.key(extra[0])}'", key=self.key(extra[0]))


def _per_cell(sec, k, n, scale=1.0, columns=1):
    """A constant or a per-cell CSV file (relative to the case file)."""
    val = sec.raw(k)
    try:
        return np.full((n, columns) if columns > 1 else n, float(val) * scale)
    except ValueError:
        pass
    path = sec.path(k)
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except OSError as exc:
        raise CaseFileError(f"'{sec.key(k)}': cannot read {path}: {exc}", key=sec.key(k)) from exc
    if data.shape[0] != n:
        raise CaseFileError(f"'{sec.key(k)}': {path} has {data.shape[0]} rows, mesh has {n} cells",
                            key=sec.key(k))
    if columns == 1:
        if data.shape[1] != 1:
            raise CaseFileError(f"'{sec.key(k)}': expected one column", key=sec.key(k))
        return data[:, 0] * scale
    if data.shape[1] == 1:
        return np.repeat(data, columns, axis=1) * scale
    if data.shape[1] != columns:
        raise CaseFileError(f"'{sec.key(k)}': expected 1 or {columns} columns", key=sec.key(k))
    return data * scale


def _mesh(sec):
    kind = sec.raw("type", "cartesian")
    if kind == "cartesian":
        nz = sec.int("nz") if sec.has("nz") else None
        return build_cartesian(sec.int("nx"), sec.int("ny"), nz, lx=sec.float("lx", 1.0),
                               ly=sec.float("ly", 1.0), lz=sec.float("lz", 1.0))
    if kind == "file":
        return load_mesh(sec.path("file"))
    raise CaseFileError(f"'mesh.type' must be cartesian or file, got {kind!r}", key="mesh.type")


def _rock(sec, mesh):
    n, d = mesh.n_cells, mesh.dim
    phi = _per_cell(sec, "porosity", n)
    model = sec.raw("permeability")
    if model == "lognormal":
        if mesh.cartesian_shape is None:
            raise CaseFileError("lognormal permeability needs a Cartesian mesh",
                                key="rock.permeability")
        k = lognormal_perm(mesh.cartesian_shape, sec.float("perm_mean", 100.0),
                           sec.float("perm_sigma", 1.0), sec.int("perm_corr", 2),
                           sec.int("seed", 0))
        perm = np.repeat(k[:, None], d, axis=1)
    elif model == "channel":
        shape = mesh.cartesian_shape
        if shape is None or len(shape) != 2:
            raise CaseFileError("channel permeability needs a 2D Cartesian mesh",
                                key="rock.permeability")
        k = channel_perm(*shape, high_md=sec.float("perm_high", 1000.0),
                         low_md=sec.float("perm_low", 2.0), seed=sec.int("seed", 1))
        perm = np.repeat(k[:, None], d, axis=1)
    else:
        perm = _per_cell(sec, "permeability", n, MILLIDARCY, columns=d)
    return RockProperties(phi, perm, c_r=sec.float("compressibility", 0.0) / BAR,
                          p_ref=sec.float("p_ref", 0.0) * BAR)


def _fluid(sec, gravity):
    pc = None
    if sec.has("pc_table"):
        path = sec.path("pc_table")
        try:
            tab = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        except OSError as exc:
            raise CaseFileError(f"'fluid.pc_table': cannot read {path}: {exc}",
                                key="fluid.pc_table") from exc
        if tab.shape[1] != 2:
            raise CaseFileError("'fluid.pc_table' needs two columns: sw, pc [bar]",
                                key="fluid.pc_table")
        pc = CapillaryTable(tab[:, 0], tab[:, 1] * BAR)
    return FluidModel(
        mu_w=sec.float("mu_w", 1.0) * CENTIPOISE, mu_o=sec.float("mu_o", 1.0) * CENTIPOISE,
        c_mu_w=sec.float("c_mu_w", 0.0) / BAR, c_mu_o=sec.float("c_mu_o", 0.0) / BAR,
        b_w_ref=sec.float("b_w", 1.0), b_o_ref=sec.float("b_o", 1.0),
        c_w=sec.float("c_w", 0.0) / BAR, c_o=sec.float("c_o", 0.0) / BAR,
        p_ref=sec.float("p_ref", 0.0) * BAR,
        rho_w_s=sec.float("rho_w", 1000.0), rho_o_s=sec.float("rho_o", 800.0),
        swr=sec.float("swr", 0.0), sor=sec.float("sor", 0.0),
        nw=sec.float("nw", 2.0), no=sec.float("no", 2.0), pc=pc,
        gravity=9.80665 if gravity else 0.0,
    )


_WELL_KEYS = {"injector", "producer", "rate", "bhp", "cells", "wi", "rw", "skin", "wf"}


def _wells(sec, mesh, rock):
    wells = []
    for name in list(sec._items):
        spec = sec.raw(name)
        key = sec.key(name)
        kind = control = None
        target = None
        opts = {}
        for tok in spec.split():
            k, eq, v = tok.partition("=")
            if k not in _WELL_KEYS:
                raise CaseFileError(f"unknown key '{key}.{k}'", key=f"{key}.{k}")
            if k in ("injector", "producer"):
                if kind is not None or eq:
                    raise CaseFileError(f"'{key}': give exactly one of injector/producer", key=key)
                kind = k
                continue
            if not eq:
                raise CaseFileError(f"'{key}.{k}' needs a value", key=f"{key}.{k}")
            if k in ("rate", "bhp"):
                if control is not None:
                    raise CaseFileError(f"'{key}': give exactly one of rate=/bhp=", key=key)
                control = k
                target = v
            else:
                opts[k] = v
        if kind is None or control is None:
            raise CaseFileError(f"'{key}' needs injector|producer and rate=|bhp=", key=key)
        try:
            tval = float(target)
            cells = [int(c) for c in opts.pop("cells").split(",")]
            rw = float(opts.pop("rw", 0.1))
            skin = float(opts.pop("skin", 0.0))
            wf = float(opts.pop("wf", 1.0))
            wi_raw = opts.pop("wi", None)
        except KeyError:
            raise CaseFileError(f"'{key}.cells' is required", key=f"{key}.cells") from None
        except ValueError as exc:
            raise CaseFileError(f"'{key}': {exc}", key=key) from None
        for c in cells:
            if not 0 <= c < mesh.n_cells:
                raise CaseFileError(f"'{key}.cells': cell {c} outside the mesh",
                                    key=f"{key}.cells")
        if wi_raw is None:
            if mesh.cartesian_shape is None:
                raise CaseFileError(f"'{key}.wi' is required on unstructured meshes",
                                    key=f"{key}.wi")
            wi = [peaceman_wi(mesh, rock, c, r_w=rw, skin=skin) for c in cells]
        else:
            wi = [float(w) for w in wi_raw.split(",")]
        if control == "bhp":
            tval *= BAR
        try:
            wells.append(WellSpec(name, cells, wi, kind, control, tval, wf))
        except ConfigurationError as exc:
            raise CaseFileError(f"'{key}': {exc}", key=key) from exc
    return wells


def _floats(sec, k):
    try:
        return [float(x) for x in sec.raw(k).replace(",", " ").split()]
    except ValueError:
        raise CaseFileError(f"'{sec.key(k)}' must be a list of numbers", key=sec.key(k)) from None


def _schedule(sec):
    if sec.has("report_days"):
        times = _floats(sec, "report_days")
    else:
        end, n = sec.float("end_days"), sec.int("n_reports", 1)
        times = list(np.linspace(end / n, end, n))
    dt = sec.float("dt_days")
    try:
        return Schedule(tuple(t * DAY for t in times), dt * DAY,
                        dt_min=sec.float("dt_min_days", dt / 64) * DAY,
                        dt_max=sec.float("dt_max_days", dt) * DAY,
                        growth=sec.float("growth", 1.25), cut=sec.float("cut", 0.5))
    except ConfigurationError as exc:
        # report the key as written in the case file
        written = {"report_times": "report_days" if sec.has("report_days") else "end_days",
                   "dt_initial": "dt_days"}.get(exc.key, exc.key)
        raise CaseFileError(str(exc), key=sec.key(written)) from exc


def load_case(path, overrides=None) -> Case:
    """Parse a case file.  ``overrides`` maps ``degree``/``mode``/``block_size``."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise CaseFileError(f"cannot read case file {path}: {exc}", key="case") from exc
    except configparser.Error as exc:
        raise CaseFileError(f"{path}: {exc}", key="case") from exc
    for name in parser.sections():
        if name not in SECTIONS:
            raise CaseFileError(f"unknown section [{name}]", key=name)
    base = path.parent
    secs = {n: _Section(n, parser.items(n) if parser.has_section(n) else [], base)
            for n in SECTIONS}
    for req in ("mesh", "rock", "schedule"):
        if not parser.has_section(req):
            raise CaseFileError(f"missing section [{req}]", key=req)

    solver = secs["solver"]
    mesh = _mesh(secs["mesh"])
    rock = _rock(secs["rock"], mesh)
    fluid = _fluid(secs["fluid"], solver.bool("gravity", True))
    wells = _wells(secs["wells"], mesh, rock)
    schedule = _schedule(secs["schedule"])
    init = secs["initial"]
    sw = _per_cell(init, "sw", mesh.n_cells) if init.has("sw") else fluid.swr
    p0 = _per_cell(init, "p", mesh.n_cells, BAR) if init.has("p") else 100 * BAR
    settings = SolverSettings(
        tol=solver.float("tol", 1e-9), max_it=solver.int("max_it", 25),
        max_sweeps=solver.int("max_sweeps", 50), max_ds=solver.float("max_ds", 0.2),
        eps=solver.float("eps", 1e-4), jump_tol=solver.float("jump_tol", 0.2),
        order_reduction=solver.bool("order_reduction", True),
    )
    degree = solver.int("degree", 0)
    mode = solver.raw("mode", "reordered")
    block = solver.int("block_size", 1)
    name = solver.raw("name", path.stem)
    for sec in secs.values():
        sec.check_consumed()
    overrides = overrides or {}
    degree = overrides.get("degree") if overrides.get("degree") is not None else degree
    mode = overrides.get("mode") or mode
    block = overrides.get("block_size") or block
    if degree not in (0, 1):
        raise CaseFileError("'solver.degree' must be 0 or 1", key="solver.degree")
    if mode not in MODES:
        raise CaseFileError(f"'solver.mode' must be one of {', '.join(MODES)}", key="solver.mode")
    case = Case(mesh, rock, fluid, wells, schedule, sw_init=sw, p_init=p0, degree=degree,
                settings=settings, mode=mode, block_size=block, name=name)
    try:
        case.validate()
    except ConfigurationError as exc:
        key = exc.key if exc.key and "." in str(exc.key) else f"solver.{exc.key}"
        raise CaseFileError(str(exc), key=key) from exc
    return case


def _parser():
    ap = argparse.ArgumentParser(prog="reorderdg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a case file")
    r.add_argument("case", help="path to the INI case file")
    r.add_argument("--out", help="output directory (default: <case>_out next to the case)")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--degree", type=int, choices=(0, 1))
    r.add_argument("--block-size", type=int, dest="block_size")
    r.add_argument("--log-every", type=int, default=10, help="log every N steps (0: quiet)")
    r.add_argument("--debug-graph", action="store_true",
                   help="dump component histograms and sparsity images at report times")
    r.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        case = load_case(args.case, {"degree": args.degree, "mode": args.mode,
                                     "block_size": args.block_size})
    except (ConfigurationError, MeshLoadError) as exc:
        key = getattr(exc, "key", None)
        tag = f" [{key}]" if key else ""
        print(f"configuration error{tag}: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.case).with_name(Path(args.case).stem + "_out")
    try:
        report = run(case, out_dir=out, log_every=0 if args.quiet else args.log_every,
                     debug_graph=args.debug_graph)
    except ConfigurationError as exc:
        print(f"configuration error [{exc.key}]: {exc}", file=sys.stderr)
        return 2
    except ReorderDGError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    last = report.steps[-1] if report.steps else None
    msg = (f"{case.name}: {len(report.steps)} steps, {report.failures} retries, "
           f"{report.wall_time:.1f} s; output in {out}")
    if last is not None:
        msg += f"; final water cut {last.water_cut:.3f}"
        if report.mode == "compare":
            msg += f", max discrepancy {np.nanmax(report.series('discrepancy')):.2e}"
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
