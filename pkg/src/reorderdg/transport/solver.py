"""Reordered transport solvers and the global Newton reference."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from ..errors import StepFailure
from ..fluxgraph import Ordering, block_partition
from . import _kernels as K
from .discretization import Discretization, Params, TransportData

__all__ = [
    "TransportState",
    "StepStats",
    "cell_residual",
    "solve_cell",
    "solve_cycle_gauss_seidel",
    "solve_block",
    "order_reduce",
    "transport_step",
    "solve_global_newton",
]


@dataclass
class TransportState:
    """Water-saturation dofs per cell plus the active number of dofs."""

    s: np.ndarray
    nact: np.ndarray
    degree: int

    @classmethod
    def uniform(cls, disc: Discretization, sw) -> "TransportState":
        n = disc.mesh.n_cells
        s = np.zeros((n, disc.nd))
        s[:, 0] = sw
        return cls(s, np.full(n, disc.nd, dtype=np.int64), disc.degree)

    @classmethod
    def from_function(cls, disc: Discretization, func) -> "TransportState":
        return cls(disc.project(func), np.full(disc.mesh.n_cells, disc.nd, dtype=np.int64),
                   disc.degree)

    def copy(self) -> "TransportState":
        return TransportState(self.s.copy(), self.nact.copy(), self.degree)

    def means(self, disc: Discretization) -> np.ndarray:
        return disc.means(self.s)

    def promoted(self) -> "TransportState":
        """Same dofs with every cell back at full degree (start of a step)."""
        out = self.copy()
        out.nact[:] = self.s.shape[1]
        return out


@dataclass
class StepStats:
    iterations: np.ndarray
    updated: np.ndarray
    n_components: int = 0
    n_cycles: int = 0
    max_cycle_size: int = 0
    mean_cycle_size: float = 0.0
    max_sweeps: int = 0
    fallbacks: int = 0
    reduced_cells: int = 0
    global_iterations: int = 0
    mass_error: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def active_cells(self) -> int:
        return int(np.count_nonzero(self.iterations))

    @property
    def total_iterations(self) -> int:
        return int(self.iterations.sum())

    @property
    def max_iterations(self) -> int:
        return int(self.iterations.max()) if self.iterations.size else 0

    @property
    def mean_iterations(self) -> float:
        return float(self.iterations.mean()) if self.iterations.size else 0.0


_STATUS = {K.MAXIT: "Newton iteration limit reached", K.LINALG: "singular local Jacobian"}


def cell_residual(D: TransportData, P: Params, state: TransportState, cell: int,
                  with_neighbors=False):
    """Residual and own-dof Jacobian of one cell (optionally neighbor blocks)."""
    nd = state.s.shape[1]
    R, Jcc, Jnb, nbr = K.make_work(nd, D.max_faces)
    K.cell_residual(cell, state.s, state.nact, D, P, R, Jcc, Jnb, nbr, with_neighbors)
    na = state.nact[cell]
    if with_neighbors:
        return R[:na].copy(), Jcc[:na, :na].copy(), nbr.copy(), Jnb.copy()
    return R[:na].copy(), Jcc[:na, :na].copy()


def _work(D, state):
    return K.make_work(state.s.shape[1], D.max_faces)


def solve_cell(D, P, state: TransportState, cell: int, allow_reduce=True) -> int:
    """Localized Newton on one cell with upstream values frozen; returns iterations."""
    its, st, _ = K.cell_newton(cell, state.s, state.nact, D, P, allow_reduce, _work(D, state))
    if st != K.OK:
        raise StepFailure(f"cell {cell}: {_STATUS[st]}", stage="transport")
    return int(its)


def solve_cycle_gauss_seidel(D, P, state: TransportState, cells) -> tuple[int, int]:
    """Nonlinear Gauss-Seidel over a cycle; returns (sweeps, iterations).

    Falls back to a simultaneous Newton solve of the whole component when the
    sweep budget runs out.
    """
    cells = np.asarray(cells, dtype=np.int64)
    iters = np.zeros(state.s.shape[0], dtype=np.int64)
    work = _work(D, state)
    sweeps, st = K.gauss_seidel(cells, state.s, state.nact, D, P, iters, work)
    if st != K.OK:
        loc = np.full(state.s.shape[0], -1, dtype=np.int64)
        _, st = K.solve_unit(cells, loc, state.s, state.nact, D, P, iters, work)
        if st != K.OK:
            raise StepFailure(f"cycle at cell {cells[0]}: {_STATUS[st]}", stage="transport")
    return int(sweeps), int(iters.sum())


def solve_block(D, P, state: TransportState, cells) -> int:
    """Simultaneous Newton on a unit of cells; returns Newton iterations."""
    cells = np.asarray(cells, dtype=np.int64)
    iters = np.zeros(state.s.shape[0], dtype=np.int64)
    loc = np.full(state.s.shape[0], -1, dtype=np.int64)
    its, st = K.solve_unit(cells, loc, state.s, state.nact, D, P, iters, _work(D, state))
    if st != K.OK:
        raise StepFailure(f"block at cell {cells[0]}: {_STATUS[st]}", stage="transport")
    return int(its)


def order_reduce(D, P, state: TransportState, cell: int) -> bool:
    """Demote ``cell`` to its mean value if a reduction trigger fires."""
    if state.nact[cell] <= 1 or not K.needs_reduction(cell, state.s, D, P):
        return False
    K.project_mean(state.s, cell, D)
    state.nact[cell] = 1
    return True


def mass_error(D, P, state: TransportState) -> float:
    """Net water-mass imbalance of the step (kg-equivalent surface volume)."""
    return float(K.water_residual_sum(state.s, state.nact, D, P) * P.dt)


def _stats(ordering, iters, updated, **kw):
    st = ordering.stats if ordering is not None else {}
    return StepStats(iterations=iters, updated=updated, **st, **kw)


def transport_step(D: TransportData, P: Params, ordering: Ordering, graph, state_n,
                   block_size=1):
    """Solve one transport step in topological order with the skip rule.

    ``state_n`` is not modified.  Raises :class:`StepFailure` when a unit
    cannot be converged.
    """
    state = state_n.promoted()
    conv0 = K.all_cnv(state.s, state.nact, D, P) <= P.tol
    unit_ptr = block_partition(ordering, block_size)
    iters, updated, status, bad, sweeps, fallbacks = K.traverse(
        unit_ptr, ordering.ptr, ordering.cells, ordering.is_cycle, graph.in_ptr, graph.in_idx,
        conv0, state.s, state.nact, D, P, block_size > 1)
    if status != K.OK:
        raise StepFailure(f"transport failed near cell {bad}: {_STATUS[status]}",
                          stage="transport")
    stats = _stats(ordering, iters, updated,
                   max_sweeps=int(sweeps.max()) if sweeps.size else 0,
                   fallbacks=int(fallbacks),
                   reduced_cells=int(np.count_nonzero(state.nact < state.s.shape[1])),
                   mass_error=mass_error(D, P, state))
    stats.extra["skipped_cells"] = int(np.count_nonzero(conv0 & (iters == 0) & ~updated))
    return state, stats


def _global_newton(D, P, state, cells):
    n = state.s.shape[0]
    loc = np.full(n, -1, dtype=np.int64)
    loc[cells] = np.arange(cells.size)
    off = K.offsets(cells, state.nact)
    its = 0
    while True:
        R, rows, cols, vals, cnv = K.assemble_coo(cells, loc, off, state.s, state.nact, D, P)
        if cnv.size == 0 or cnv.max() <= P.tol:
            return its
        if its >= P.global_max_it:
            raise StepFailure("global Newton did not converge", stage="transport")
        J = sp.csc_matrix((vals, (rows, cols)), shape=(R.size, R.size))
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dx = spsolve(J, -R)
            except MatrixRankWarning as exc:
                raise StepFailure("singular global transport Jacobian",
                                  stage="transport") from exc
        K.apply_update(cells, off, state.s, state.nact, np.atleast_1d(dx), D, P)
        its += 1


def solve_global_newton(D: TransportData, P: Params, state_n: TransportState):
    """Reference solver: Newton on all cells at once with the same tolerances.

    Order-reduction decisions are iterated to the same fixed point the
    reordered solver reaches.
    """
    state = state_n.promoted()
    n = state.s.shape[0]
    cells = np.arange(n, dtype=np.int64)
    total = 0
    work = _work(D, state)
    for _ in range(P.max_degree_loops):
        total += _global_newton(D, P, state, cells)
        if not (P.reduce and state.s.shape[1] > 1):
            break
        if not _verify_in_order(D, P, state, work):
            break
    iters = np.full(n, total, dtype=np.int64)
    stats = StepStats(iterations=iters, updated=np.ones(n, dtype=bool), global_iterations=total,
                      reduced_cells=int(np.count_nonzero(state.nact < state.s.shape[1])),
                      mass_error=mass_error(D, P, state))
    return state, stats


def _verify_in_order(D, P, state, work):
    return bool(K.verify_degrees(np.arange(state.s.shape[0], dtype=np.int64), state.s,
                                 state.nact, D, P, work))
