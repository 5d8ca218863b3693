"""Intercell flux graph, strongly connected components and topological ordering.

An edge ``i -> j`` means cell ``j``'s transport residual depends on the
state of cell ``i`` (``i`` is upstream of ``j`` for some phase).  Components
of mutually dependent cells are condensed and the condensation is sorted so
that every edge points from an earlier component to a later one.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._jit import njit
from .mesh import PolyMesh

__all__ = [
    "FluxGraph",
    "Ordering",
    "build_graph",
    "graph_from_edges",
    "condense_and_sort",
    "block_partition",
    "permuted_sparsity",
    "is_block_lower_triangular",
    "dump_debug",
]


@dataclass(frozen=True, eq=False)
class FluxGraph:
    """Directed graph over ``n`` cells stored as out- and in-adjacency CSR."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def successors(self, i):
        return self.out_idx[self.out_ptr[i]:self.out_ptr[i + 1]]

    def predecessors(self, i):
        return self.in_idx[self.in_ptr[i]:self.in_ptr[i + 1]]


def _csr(n, keys, vals):
    order = np.lexsort((vals, keys))
    keys, vals = keys[order], vals[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, keys + 1, 1)
    return np.cumsum(ptr), vals.astype(np.int64)


def graph_from_edges(n, edges) -> FluxGraph:
    """Graph from an iterable of ``(i, j)`` pairs; duplicates and self-loops dropped."""
    arr = np.array(sorted({(int(a), int(b)) for a, b in edges if a != b}), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    src, dst = arr[:, 0].copy(), arr[:, 1].copy()
    if src.size and (src.min() < 0 or max(src.max(), dst.max()) >= n):
        raise ValueError("edge endpoint outside the node range")
    out_ptr, out_idx = _csr(n, src, dst)
    in_ptr, in_idx = _csr(n, dst, src)
    return FluxGraph(n, src, dst, out_ptr, out_idx, in_ptr, in_idx)


def build_graph(mesh: PolyMesh, pstate, fluid, capillary=None) -> FluxGraph:
    """Flux graph of a converged pressure solution.

    Faces without gravity or capillary coupling follow the sign of the total
    flux.  Where a gravity term is present, both directions are added whenever
    counter-current flow is possible for some admissible mobility, so the
    graph never misses a dependency.  A non-constant capillary table couples
    every interior face in both directions.
    """
    inner = mesh.interior_faces
    ci, cj = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    v = pstate.flux[inner]
    g = pstate.grav[inner]
    cap = fluid.has_capillary if capillary is None else capillary
    if cap:
        both = pstate.trans[inner] > 0
        fwd = np.zeros_like(both)
        bwd = np.zeros_like(both)
    else:
        gmax = np.max(np.abs(g)) if g.size else 0.0
        g = np.where(np.abs(g) <= 1e-12 * gmax, 0.0, g)
        p = pstate.p
        pc, _ = fluid.capillary(np.zeros(mesh.n_cells))
        pw = p - pc
        mw = np.minimum(fluid.visc_w(pw[ci]), fluid.visc_w(pw[cj]))
        mo = np.minimum(fluid.visc_o(p[ci]), fluid.visc_o(p[cj]))
        lw_max, lo_max = 1.0 / mw, 1.0 / mo
        pos = v >= 0
        counter = np.where(
            g > 0,
            np.where(pos, v - lw_max * g <= 0, v + lo_max * g > 0),
            np.where(pos, v + lo_max * g <= 0, v - lw_max * g > 0),
        ) & (g != 0)
        both = counter
        fwd = ~counter & (((g == 0) & (v > 0)) | ((g != 0) & pos))
        bwd = ~counter & (((g == 0) & (v < 0)) | ((g != 0) & ~pos))
    src = np.concatenate([ci[fwd | both], cj[bwd | both]])
    dst = np.concatenate([cj[fwd | both], ci[bwd | both]])
    return graph_from_edges(mesh.n_cells, zip(src.tolist(), dst.tolist()))


@njit
def _tarjan(n, out_ptr, out_idx):
    index = np.full(n, -1, np.int64)
    low = np.zeros(n, np.int64)
    onstack = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    sp_ = 0
    call_v = np.empty(n, np.int64)
    call_e = np.empty(n, np.int64)
    cp = 0
    comp = np.full(n, -1, np.int64)
    ncomp = 0
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp_] = root
        sp_ += 1
        onstack[root] = True
        call_v[cp] = root
        call_e[cp] = out_ptr[root]
        cp += 1
        while cp > 0:
            v = call_v[cp - 1]
            e = call_e[cp - 1]
            if e < out_ptr[v + 1]:
                call_e[cp - 1] = e + 1
                w = out_idx[e]
                if index[w] == -1:
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp_] = w
                    sp_ += 1
                    onstack[w] = True
                    call_v[cp] = w
                    call_e[cp] = out_ptr[w]
                    cp += 1
                elif onstack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                cp -= 1
                if cp > 0:
                    u = call_v[cp - 1]
                    if low[v] < low[u]:
                        low[u] = low[v]
                if low[v] == index[v]:
                    while True:
                        sp_ -= 1
                        w = stack[sp_]
                        onstack[w] = False
                        comp[w] = ncomp
                        if w == v:
                            break
                    ncomp += 1
    return comp, ncomp


@njit
def _heap_push(heap, size, key):
    i = size
    heap[i] = key
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return size + 1


@njit
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and heap[l] < heap[m]:
            m = l
        if r < size and heap[r] < heap[m]:
            m = r
        if m == i:
            break
        heap[m], heap[i] = heap[i], heap[m]
        i = m
    return top, size


@njit
def _kahn(n, ncomp, comp, src, dst):
    """Topological order of the condensation, ties broken by smallest member cell."""
    cmin = np.full(ncomp, n, np.int64)
    for c in range(n):
        if c < cmin[comp[c]]:
            cmin[comp[c]] = c
    key_to_comp = np.full(n, -1, np.int64)
    for k in range(ncomp):
        key_to_comp[cmin[k]] = k
    indeg = np.zeros(ncomp, np.int64)
    cnt = np.zeros(ncomp + 1, np.int64)
    m = src.shape[0]
    for e in range(m):
        a = comp[src[e]]
        b = comp[dst[e]]
        if a != b:
            cnt[a + 1] += 1
    for k in range(ncomp):
        cnt[k + 1] += cnt[k]
    adj = np.empty(cnt[ncomp], np.int64)
    fill = cnt[:-1].copy()
    for e in range(m):
        a = comp[src[e]]
        b = comp[dst[e]]
        if a != b:
            adj[fill[a]] = b
            fill[a] += 1
            indeg[b] += 1
    heap = np.empty(ncomp, np.int64)
    size = 0
    for k in range(ncomp):
        if indeg[k] == 0:
            size = _heap_push(heap, size, cmin[k])
    order = np.empty(ncomp, np.int64)
    t = 0
    while size > 0:
        key, size = _heap_pop(heap, size)
        k = key_to_comp[key]
        order[t] = k
        t += 1
        for e in range(cnt[k], cnt[k + 1]):
            b = adj[e]
            indeg[b] -= 1
            if indeg[b] == 0:
                size = _heap_push(heap, size, cmin[b])
    return order


@dataclass(frozen=True, eq=False)
class Ordering:
    """Topologically sorted strongly connected components.

    Component ``k`` holds cells ``cells[ptr[k]:ptr[k+1]]`` (ascending), ``comp``
    maps each cell to its component position and ``perm[c]`` is the new index
    of cell ``c`` in the permuted system.
    """

    ptr: np.ndarray
    cells: np.ndarray
    comp: np.ndarray
    perm: np.ndarray
    is_cycle: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.is_cycle.size)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.ptr)

    def component(self, k):
        return self.cells[self.ptr[k]:self.ptr[k + 1]]

    def components(self):
        return [self.component(k) for k in range(self.n_components)]

    @property
    def stats(self) -> dict:
        sizes = self.sizes[self.is_cycle]
        return {
            "n_components": self.n_components,
            "n_cycles": int(sizes.size),
            "max_cycle_size": int(sizes.max()) if sizes.size else 0,
            "mean_cycle_size": float(sizes.mean()) if sizes.size else 0.0,
        }

    def is_topological(self, graph: FluxGraph) -> bool:
        a, b = self.comp[graph.src], self.comp[graph.dst]
        return bool(np.all((a < b) | (a == b)))


def condense_and_sort(graph: FluxGraph) -> Ordering:
    n = graph.n
    raw, ncomp = _tarjan(n, graph.out_ptr, graph.out_idx)
    order = _kahn(n, ncomp, raw, graph.src, graph.dst)
    position = np.empty(ncomp, dtype=np.int64)
    position[order] = np.arange(ncomp)
    comp = position[raw]
    cells = np.lexsort((np.arange(n), comp)).astype(np.int64)
    sizes = np.bincount(comp, minlength=ncomp)
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    perm = np.empty(n, dtype=np.int64)
    perm[cells] = np.arange(n)
    return Ordering(ptr, cells, comp, perm, sizes > 1)


def block_partition(ordering: Ordering, n_b: int) -> np.ndarray:
    """Group consecutive components into units of at most ``n_b`` cells.

    Returns ``unit_ptr`` over component positions.  A component bigger than
    ``n_b`` gets a unit of its own, so cycles are never split.
    """
    if n_b < 1:
        raise ValueError("block size must be at least 1")
    ptr = [0]
    fill = 0
    for k, size in enumerate(ordering.sizes):
        if fill and fill + size > n_b:
            ptr.append(k)
            fill = 0
        fill += size
    ptr.append(ordering.n_components)
    return np.array(ptr, dtype=np.int64)


def permuted_sparsity(ordering: Ordering, graph: FluxGraph, n_dof: int) -> sp.csr_matrix:
    """Boolean pattern of the transport Jacobian in the permuted numbering.

    Row blocks belong to residuals, column blocks to unknowns; an edge
    ``i -> j`` puts a block at (perm[j], perm[i]).
    """
    n = graph.n
    rows = np.concatenate([np.arange(n), ordering.perm[graph.dst]])
    cols = np.concatenate([np.arange(n), ordering.perm[graph.src]])
    block = sp.coo_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n))
    return sp.kron(block, np.ones((n_dof, n_dof), dtype=bool), format="csr").astype(bool)


def is_block_lower_triangular(pattern, ordering: Ordering, n_dof: int) -> bool:
    """True if no nonzero lies above the diagonal blocks of the components."""
    coo = sp.coo_matrix(pattern)
    mask = coo.data != 0
    r, c = coo.row[mask] // n_dof, coo.col[mask] // n_dof
    # convert permuted cell positions to component positions
    comp_of_pos = ordering.comp[ordering.cells]
    return bool(np.all(comp_of_pos[c] <= comp_of_pos[r]))


def dump_debug(ordering: Ordering, graph: FluxGraph, path, n_dof=1, max_pixels=1024):
    """Write a component-size histogram (``.txt``) and the permuted pattern (``.pgm``)."""
    path = Path(path)
    hist = Counter(ordering.sizes.tolist())
    lines = ["# component_size count"] + [f"{k} {hist[k]}" for k in sorted(hist)]
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")
    pat = permuted_sparsity(ordering, graph, n_dof).tocoo()
    size = pat.shape[0]
    scale = max(1, -(-size // max_pixels))
    side = -(-size // scale)
    img = np.full((side, side), 255, dtype=np.uint8)
    img[pat.row // scale, pat.col // scale] = 0
    with open(path.with_suffix(".pgm"), "wb") as fh:
        fh.write(f"P5\n{side} {side}\n255\n".encode())
        fh.write(img.tobytes())
