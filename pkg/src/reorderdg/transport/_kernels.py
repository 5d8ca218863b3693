"""Compiled transport kernels.

Everything here operates on two records built by :mod:`.discretization`:
``D`` holds geometry, quadrature tables and frozen per-step coefficients,
``P`` holds scalar parameters.  Saturation dofs live in an ``(N, nd)`` array
``s``; ``nact[c]`` is the number of active dofs in cell ``c`` (1 after order
reduction, ``nd`` otherwise).  Inactive dofs are kept at zero.

Status codes returned by the solvers: 0 converged, 1 Newton iteration limit,
2 linear solve failure.
"""
import numpy as np

from .._jit import njit
from ..petro import corey, pc_eval

OK, MAXIT, LINALG = 0, 1, 2


@njit
def _mob(s, mu_w, mu_o, P):
    krw, dkrw, kro, dkro = corey(s, P.swr, P.sor, P.nw, P.no)
    return krw / mu_w, dkrw / mu_w, kro / mu_o, dkro / mu_o


@njit
def face_mass_flux(vd, gd, so, sn, mwo, mwn, moo, mon, bwo, bwn, P):
    """Water mass flux density across a face point, owner to neighbor.

    ``vd`` is the total flux density and ``gd`` the gravity/capillary density
    term.  Phase upstream sides follow the explicit two-phase upwind rule.
    Returns the flux and its derivatives with respect to the owner trace,
    the neighbor trace and ``gd``.
    """
    lwo, dlwo, loo, dloo = _mob(so, mwo, moo, P)
    lwn, dlwn, lon, dlon = _mob(sn, mwn, mon, P)
    if gd == 0.0:
        uw = vd > 0.0
        uo = uw
    elif vd >= 0.0:
        if gd > 0.0:
            uw = True
            uo = vd - lwo * gd > 0.0
        else:
            uo = True
            uw = vd + loo * gd > 0.0
    else:
        if gd > 0.0:
            uo = False
            uw = vd + lon * gd > 0.0
        else:
            uw = False
            uo = vd - lwn * gd > 0.0
    if uw:
        lw, dlw, b = lwo, dlwo, bwo
    else:
        lw, dlw, b = lwn, dlwn, bwn
    if uo:
        lo, dlo = loo, dloo
    else:
        lo, dlo = lon, dlon
    tot = lw + lo
    if tot <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    a = vd + lo * gd
    flux = lw * a / tot
    df_dlw = a * lo / (tot * tot)
    df_dlo = lw * (lw * gd - vd) / (tot * tot)
    df_dg = lw * lo / tot
    dso = 0.0
    dsn = 0.0
    if uw:
        dso += df_dlw * dlw
    else:
        dsn += df_dlw * dlw
    if uo:
        dso += df_dlo * dlo
    else:
        dsn += df_dlo * dlo
    return b * flux, b * dso, b * dsn, b * df_dg


@njit
def trace(s, c, phi, q):
    val = 0.0
    for k in range(s.shape[1]):
        val += phi[q, k] * s[c, k]
    return val


@njit
def cell_mean(s, c, D):
    val = 0.0
    for k in range(s.shape[1]):
        val += D.mean_w[c, k] * s[c, k]
    return val


@njit
def cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, with_nb):
    """Residual of cell ``c`` tested against its active basis functions.

    ``Jcc`` receives derivatives with respect to the cell's own dofs.  When
    ``with_nb`` is set, ``Jnb[k]`` receives derivatives with respect to the
    dofs of the neighbor across the k-th face of the cell, whose index is
    stored in ``nbr[k]`` (-1 for boundary faces).
    """
    nd = s.shape[1]
    na = nact[c]
    R[:] = 0.0
    Jcc[:, :] = 0.0
    dt = P.dt
    # accumulation
    for j in range(na):
        acc = 0.0
        for k in range(nd):
            acc += D.mass[c, j, k] * s[c, k]
        R[j] += (D.phib[c] * acc - D.acc_old[c, j]) / dt
        for k in range(na):
            Jcc[j, k] += D.phib[c] * D.mass[c, j, k] / dt
    # injection
    for j in range(na):
        R[j] -= D.inj_w[c] * D.mean_w[c, j]
    # volume integrals: advective term and production
    prod = D.prod_q[c]
    if na > 1 or prod != 0.0:
        bw = D.bw[c]
        for q in range(D.vq_ptr[c], D.vq_ptr[c + 1]):
            sq = trace(s, c, D.vq_phi, q)
            lw, dlw, lo, dlo = _mob(sq, D.mu_w[c], D.mu_o[c], P)
            lt = lw + lo
            fw = 0.0
            dfw = 0.0
            h = 0.0
            dh = 0.0
            if lt > 0.0:
                fw = lw / lt
                dfw = (dlw * lo - lw * dlo) / (lt * lt)
                h = lw * lo / lt
                dh = (dlw * lo * lo + dlo * lw * lw) / (lt * lt)
            wq = D.vq_w[q] * bw
            for j in range(1, na):
                gv = 0.0
                gg = 0.0
                for d in range(D.vel.shape[1]):
                    gv += D.vq_grad[q, j, d] * D.vel[c, d]
                    gg += D.vq_grad[q, j, d] * D.gk[c, d]
                R[j] -= wq * (fw * gv + h * gg)
                dv = wq * (dfw * gv + dh * gg)
                for k in range(na):
                    Jcc[j, k] -= dv * D.vq_phi[q, k]
            if prod != 0.0:
                coef = wq * prod / D.vol[c]
                for j in range(na):
                    R[j] -= coef * fw * D.vq_phi[q, j]
                    for k in range(na):
                        Jcc[j, k] -= coef * dfw * D.vq_phi[q, j] * D.vq_phi[q, k]
    # faces
    start = D.cf_ptr[c]
    for idx in range(start, D.cf_ptr[c + 1]):
        lk = idx - start
        f = D.cf_face[idx]
        ow = D.face_owner[f]
        nb = D.face_nbr[f]
        if with_nb:
            nbr[lk] = -1
            Jnb[lk, :, :] = 0.0
        if nb < 0:
            continue
        own = ow == c
        other = nb if own else ow
        if with_nb:
            nbr[lk] = other
        sign = 1.0 if own else -1.0
        v = D.face_v[f]
        g = D.face_g[f]
        dg_o = 0.0
        dg_n = 0.0
        if P.cap:
            pco, slo = pc_eval(s[ow, 0], D.pc_s, D.pc_v)
            pcn, sln = pc_eval(s[nb, 0], D.pc_s, D.pc_v)
            g -= D.face_T[f] * (pco - pcn)
            dg_o = -D.face_T[f] * slo
            dg_n = D.face_T[f] * sln
        elif v == 0.0 and g == 0.0:
            continue
        area = D.face_area[f]
        vd = v / area
        gd = g / area
        for q in range(D.fq_ptr[f], D.fq_ptr[f + 1]):
            so = trace(s, ow, D.fq_phi_o, q)
            sn = trace(s, nb, D.fq_phi_n, q)
            m, dmo, dmn, dmg = face_mass_flux(vd, gd, so, sn, D.mu_w[ow], D.mu_w[nb],
                                              D.mu_o[ow], D.mu_o[nb], D.bw[ow], D.bw[nb], P)
            dmo += dmg * dg_o / area
            dmn += dmg * dg_n / area
            wq = sign * D.fq_w[q]
            if own:
                dmc = dmo
                dmx = dmn
            else:
                dmc = dmn
                dmx = dmo
            for j in range(na):
                pj = D.fq_phi_o[q, j] if own else D.fq_phi_n[q, j]
                R[j] += wq * m * pj
                for k in range(na):
                    pk = D.fq_phi_o[q, k] if own else D.fq_phi_n[q, k]
                    Jcc[j, k] += wq * dmc * pj * pk
                if with_nb:
                    for k in range(nact[other]):
                        pk = D.fq_phi_n[q, k] if own else D.fq_phi_o[q, k]
                        Jnb[lk, j, k] += wq * dmx * pj * pk


@njit
def cnv_of(R, na, scale):
    m = 0.0
    for j in range(na):
        a = abs(R[j])
        if a > m:
            m = a
    return m * scale


@njit
def make_work(nd, max_faces):
    return (np.zeros(nd), np.zeros((nd, nd)), np.zeros((max_faces, nd, nd)),
            np.full(max_faces, -1, np.int64))


@njit
def all_cnv(s, nact, D, P):
    """CNV-scaled residual norm of every cell at the current state."""
    n = s.shape[0]
    R, Jcc, Jnb, nbr = make_work(s.shape[1], D.max_faces)
    out = np.zeros(n)
    for c in range(n):
        cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, False)
        out[c] = cnv_of(R, nact[c], D.scale[c])
    return out


@njit
def water_residual_sum(s, nact, D, P):
    """Sum over cells of the constant-mode residual (net water mass imbalance rate)."""
    R, Jcc, Jnb, nbr = make_work(s.shape[1], D.max_faces)
    tot = 0.0
    for c in range(s.shape[0]):
        cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, False)
        tot += R[0]
    return tot


@njit
def project_mean(s, c, D):
    m = cell_mean(s, c, D)
    s[c, 0] = m
    for k in range(1, s.shape[1]):
        s[c, k] = 0.0


@njit
def clamp_mean(s, c, D):
    m = cell_mean(s, c, D)
    if m < 0.0:
        s[c, 0] -= m
    elif m > 1.0:
        s[c, 0] -= m - 1.0


@njit
def needs_reduction(c, s, D, P):
    """Order-reduction triggers for a cell holding a higher-order solution."""
    lo = -P.eps
    hi = 1.0 + P.eps
    for q in range(D.chk_ptr[c], D.chk_ptr[c + 1]):
        val = trace(s, c, D.chk_phi, q)
        if val < lo or val > hi:
            return True
    for q in range(D.vq_ptr[c], D.vq_ptr[c + 1]):
        val = trace(s, c, D.vq_phi, q)
        if val < lo or val > hi:
            return True
    for idx in range(D.cf_ptr[c], D.cf_ptr[c + 1]):
        f = D.cf_face[idx]
        ow = D.face_owner[f]
        nb = D.face_nbr[f]
        if nb < 0:
            continue
        own = ow == c
        wsum = 0.0
        jump = 0.0
        for q in range(D.fq_ptr[f], D.fq_ptr[f + 1]):
            so = trace(s, ow, D.fq_phi_o, q)
            sn = trace(s, nb, D.fq_phi_n, q)
            mine = so if own else sn
            if mine < lo or mine > hi:
                return True
            wsum += D.fq_w[q]
            jump += D.fq_w[q] * (so - sn)
        inflow = (D.face_v[f] < 0.0) if own else (D.face_v[f] > 0.0)
        if inflow and wsum > 0.0 and abs(jump / wsum) > P.jump_tol:
            return True
    return False


@njit
def damp_cell(s, c, ds, na, D, P):
    """Apply ``ds`` scaled so no vertex value moves by more than ``P.max_ds``."""
    big = 0.0
    for q in range(D.chk_ptr[c], D.chk_ptr[c + 1]):
        dv = 0.0
        for k in range(na):
            dv += D.chk_phi[q, k] * ds[k]
        big = max(big, abs(dv))
    scale = 1.0
    if big > P.max_ds:
        scale = P.max_ds / big
    for k in range(na):
        s[c, k] += scale * ds[k]
    clamp_mean(s, c, D)


@njit
def cell_newton(c, s, nact, D, P, allow_reduce, work):
    """Damped Newton on one cell; returns (iterations, status, reduced)."""
    R, Jcc, Jnb, nbr = work
    its = 0
    reduced = False
    while True:
        cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, False)
        na = nact[c]
        if cnv_of(R, na, D.scale[c]) <= P.tol:
            if allow_reduce and P.reduce and na > 1 and needs_reduction(c, s, D, P):
                project_mean(s, c, D)
                nact[c] = 1
                reduced = True
                continue
            return its, OK, reduced
        if its >= P.max_it:
            return its, MAXIT, reduced
        A = Jcc[:na, :na].copy()
        b = -R[:na].copy()
        if na == 1:
            if A[0, 0] == 0.0:
                return its, LINALG, reduced
            ds = b / A[0, 0]
        else:
            ds = np.linalg.solve(A, b)
        damp_cell(s, c, ds, na, D, P)
        its += 1


@njit
def gauss_seidel(cells, s, nact, D, P, iters, work):
    """Alternating sweeps over a cycle; returns (sweeps, status)."""
    m = cells.shape[0]
    for sweep in range(P.max_sweeps):
        changed = False
        for t in range(m):
            c = cells[t] if sweep % 2 == 0 else cells[m - 1 - t]
            its, st, red = cell_newton(c, s, nact, D, P, True, work)
            iters[c] += its
            if st != OK:
                return sweep + 1, st
            if its > 0 or red:
                changed = True
        if not changed:
            return sweep + 1, OK
    return P.max_sweeps, MAXIT


@njit
def assemble_unit(cells, loc, off, s, nact, D, P, work):
    """Dense residual and Jacobian of the stacked unknowns of ``cells``.

    ``loc[c]`` is the position of cell c in ``cells`` (or -1) and ``off`` the
    dof offsets.  Returns (R, J, max cnv).
    """
    R, Jcc, Jnb, nbr = work
    ntot = off[cells.shape[0]]
    Rg = np.zeros(ntot)
    Jg = np.zeros((ntot, ntot))
    worst = 0.0
    for t in range(cells.shape[0]):
        c = cells[t]
        cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, True)
        na = nact[c]
        o = off[t]
        worst = max(worst, cnv_of(R, na, D.scale[c]))
        for j in range(na):
            Rg[o + j] = R[j]
            for k in range(na):
                Jg[o + j, o + k] += Jcc[j, k]
        for lk in range(D.cf_ptr[c + 1] - D.cf_ptr[c]):
            x = nbr[lk]
            if x < 0 or loc[x] < 0:
                continue
            ox = off[loc[x]]
            for j in range(na):
                for k in range(nact[x]):
                    Jg[o + j, ox + k] += Jnb[lk, j, k]
    return Rg, Jg, worst


@njit
def assemble_coo(cells, loc, off, s, nact, D, P):
    """Sparse (COO) version of :func:`assemble_unit` for large unknown sets."""
    work = make_work(s.shape[1], D.max_faces)
    R, Jcc, Jnb, nbr = work
    nd = s.shape[1]
    ncell = cells.shape[0]
    ntot = off[ncell]
    cap = ncell * nd * nd * (D.max_faces + 1)
    rows = np.empty(cap, np.int64)
    cols = np.empty(cap, np.int64)
    vals = np.empty(cap)
    Rg = np.zeros(ntot)
    cnv = np.zeros(ncell)
    p = 0
    for t in range(ncell):
        c = cells[t]
        cell_residual(c, s, nact, D, P, R, Jcc, Jnb, nbr, True)
        na = nact[c]
        o = off[t]
        cnv[t] = cnv_of(R, na, D.scale[c])
        for j in range(na):
            Rg[o + j] = R[j]
            for k in range(na):
                rows[p] = o + j
                cols[p] = o + k
                vals[p] = Jcc[j, k]
                p += 1
        for lk in range(D.cf_ptr[c + 1] - D.cf_ptr[c]):
            x = nbr[lk]
            if x < 0 or loc[x] < 0:
                continue
            ox = off[loc[x]]
            for j in range(na):
                for k in range(nact[x]):
                    rows[p] = o + j
                    cols[p] = ox + k
                    vals[p] = Jnb[lk, j, k]
                    p += 1
    return Rg, rows[:p], cols[:p], vals[:p], cnv


@njit
def apply_update(cells, off, s, nact, dx, D, P):
    for t in range(cells.shape[0]):
        c = cells[t]
        damp_cell(s, c, dx[off[t]:off[t + 1]], nact[c], D, P)


@njit
def offsets(cells, nact):
    off = np.zeros(cells.shape[0] + 1, np.int64)
    for t in range(cells.shape[0]):
        off[t + 1] = off[t] + nact[cells[t]]
    return off


@njit
def unit_newton(cells, loc, s, nact, D, P, work):
    """Simultaneous damped Newton on a set of cells; returns (iterations, status)."""
    for t in range(cells.shape[0]):
        loc[cells[t]] = t
    off = offsets(cells, nact)
    its = 0
    status = OK
    while True:
        Rg, Jg, worst = assemble_unit(cells, loc, off, s, nact, D, P, work)
        if worst <= P.tol:
            break
        if its >= P.max_it:
            status = MAXIT
            break
        dx = np.linalg.solve(Jg, -Rg)
        apply_update(cells, off, s, nact, dx, D, P)
        its += 1
    for t in range(cells.shape[0]):
        loc[cells[t]] = -1
    return its, status


@njit
def verify_degrees(cells, s, nact, D, P, work):
    """Recompute order-reduction decisions from the current unit solution.

    Each cell is solved at full degree with all other cells frozen and tested
    with the reduction triggers, which is the decision cell-by-cell mode
    would make given the same neighbors.  Returns True if any cell changed
    degree (demoted cells are projected to their mean).
    """
    nd = s.shape[1]
    changed = False
    saved = np.empty(nd)
    for t in range(cells.shape[0]):
        c = cells[t]
        saved[:] = s[c, :]
        old = nact[c]
        nact[c] = nd
        its, st, red = cell_newton(c, s, nact, D, P, False, work)
        want = 1 if (st != OK or needs_reduction(c, s, D, P)) else nd
        s[c, :] = saved
        nact[c] = old
        if want != old:
            changed = True
            nact[c] = want
            if want == 1:
                project_mean(s, c, D)
    return changed


@njit
def solve_unit(cells, loc, s, nact, D, P, iters, work):
    """Block solve with the degree fixed-point loop; returns (iterations, status)."""
    total = 0
    for _ in range(P.max_degree_loops):
        its, st = unit_newton(cells, loc, s, nact, D, P, work)
        total += its
        if st != OK:
            for t in range(cells.shape[0]):
                iters[cells[t]] += total
            return total, st
        if not (P.reduce and s.shape[1] > 1):
            break
        if not verify_degrees(cells, s, nact, D, P, work):
            break
    for t in range(cells.shape[0]):
        iters[cells[t]] += total
    return total, OK


@njit
def traverse(unit_ptr, comp_ptr, order, comp_cycle, in_ptr, in_cells, conv0, s, nact, D, P,
             block_mode):
    """Solve all units in topological order with the skip rule.

    ``order`` lists cells in component order; component k spans
    ``order[comp_ptr[k]:comp_ptr[k+1]]`` and unit u spans components
    ``unit_ptr[u]:unit_ptr[u+1]``.  Returns (iterations per cell, updated
    flags, status, failing cell, sweeps per component, GS fallbacks).
    """
    n = s.shape[0]
    nd = s.shape[1]
    iters = np.zeros(n, np.int64)
    updated = np.zeros(n, np.bool_)
    in_unit = np.full(n, -1, np.int64)
    loc = np.full(n, -1, np.int64)
    sweeps = np.zeros(comp_ptr.shape[0] - 1, np.int64)
    fallbacks = 0
    work = make_work(nd, D.max_faces)
    n_units = unit_ptr.shape[0] - 1
    for u in range(n_units):
        a = comp_ptr[unit_ptr[u]]
        b = comp_ptr[unit_ptr[u + 1]]
        cells = order[a:b]
        for c in cells:
            in_unit[c] = u
        skip = True
        for c in cells:
            if not conv0[c]:
                skip = False
                break
            for e in range(in_ptr[c], in_ptr[c + 1]):
                x = in_cells[e]
                if in_unit[x] != u and updated[x]:
                    skip = False
                    break
            if not skip:
                break
        if skip:
            continue
        snap = s[cells].copy()
        deg0 = nact[cells].copy()
        status = OK
        if block_mode and cells.shape[0] > 1:
            its, status = solve_unit(cells, loc, s, nact, D, P, iters, work)
        else:
            for k in range(unit_ptr[u], unit_ptr[u + 1]):
                comp = order[comp_ptr[k]:comp_ptr[k + 1]]
                if comp_cycle[k]:
                    sw, status = gauss_seidel(comp, s, nact, D, P, iters, work)
                    sweeps[k] = sw
                    if status != OK:
                        fallbacks += 1
                        its, status = solve_unit(comp, loc, s, nact, D, P, iters, work)
                else:
                    c = comp[0]
                    its, status, _red = cell_newton(c, s, nact, D, P, True, work)
                    iters[c] += its
                if status != OK:
                    return iters, updated, status, comp[0], sweeps, fallbacks
        if status != OK:
            return iters, updated, status, cells[0], sweeps, fallbacks
        for t in range(cells.shape[0]):
            c = cells[t]
            if nact[c] != deg0[t]:
                updated[c] = True
                continue
            for k in range(nd):
                if s[c, k] != snap[t, k]:
                    updated[c] = True
                    break
    return iters, updated, OK, -1, sweeps, fallbacks
