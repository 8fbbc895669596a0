"""Chebyshev radial collocation for the per-mode interface problems.

This is the deliberately independent discretization: primitive variables
(U, V, T, P) on Chebyshev nodes in each region, momentum/continuity enforced
at the nodes (times r^2 to regularize the origin), interface and boundary
conditions as extra rows, solved by equilibrated least squares.  It shares no
radial machinery with the exact monomial solver and is used to cross-check it
and to evaluate the discrete inf-sup constants of the pressure coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import sphharm as sh
from ..surface import DomainSpec, MaterialParams
from ._mono import m_eval
from .modes import INNER, OUTER, StokesData


def cheb(n: int):
    """Chebyshev differentiation matrix and nodes on [-1, 1] (Trefethen)."""
    if n == 0:
        return np.zeros((1, 1)), np.array([1.0])
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def clencurt(n: int):
    """Clenshaw-Curtis quadrature weights for the cheb(n) nodes."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[1:-1]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k**2 - 1)
    w[1:-1] = 2.0 * v / n
    return w


@dataclass
class _Region:
    r: np.ndarray
    D: np.ndarray
    D2: np.ndarray
    wq: np.ndarray  # quadrature weights in r


def _region(r0: float, r1: float, n: int) -> _Region:
    D, x = cheb(n)
    half = 0.5 * (r1 - r0)
    r = r0 + half * (x + 1.0)
    return _Region(r=r, D=D / half, D2=(D @ D) / half**2,
                   wq=clencurt(n) * half)


@dataclass(frozen=True)
class CollocationSolution:
    l: int
    m: int
    W: float
    Vs: float
    Ts: float
    Q: float
    r_in: np.ndarray
    r_out: np.ndarray
    fields_in: dict
    fields_out: dict
    residual: float


def _data_at(entry: dict, r: np.ndarray, comp: int | None = None) -> np.ndarray:
    out = np.zeros_like(r)
    for p, val in (entry or {}).items():
        c = val[comp] if comp is not None else val
        out += c * r**p
    return out


def collocation_solve(data: StokesData, system: str, params: MaterialParams,
                      domain: DomainSpec, l: int, m: int,
                      n_nodes: int = 64) -> CollocationSolution:
    """Solve one (l, m) mode of s1/s2 by Chebyshev collocation."""
    a, R = domain.a, domain.r_outer
    mu_b, mu = params.mu_b, params.mu
    L = l * (l + 1.0)
    reg_in = _region(0.0, a, n_nodes)
    reg_out = _region(a, R, n_nodes)
    n1 = n_nodes + 1
    # unknown layout: [U_in, V_in, T_in, P_in, U_out, V_out, T_out, P_out, q]
    nf = 4 * n1
    ntot = 2 * nf + 1
    iq = ntot - 1

    def sl(region: int, fieldno: int) -> slice:
        off = region * nf + fieldno * n1
        return slice(off, off + n1)

    rows = []
    rhs = []

    def add(row: np.ndarray, b: float):
        rows.append(row)
        rhs.append(b)

    f1 = {INNER: data.f1.get((INNER, l, m), {}),
          OUTER: data.f1.get((OUTER, l, m), {})}
    f2 = {INNER: data.f2.get((INNER, l, m), {}),
          OUTER: data.f2.get((OUTER, l, m), {})}

    for regno, (reg, rkey) in enumerate(((reg_in, INNER), (reg_out, OUTER))):
        r = reg.r
        D, D2 = reg.D, reg.D2
        Ident = np.eye(n1)
        r1 = np.diag(r)
        r2 = np.diag(r**2)
        sU, sV, sT, sP = (sl(regno, k) for k in range(4))
        # radial momentum (times r^2)
        block = np.zeros((n1, ntot))
        block[:, sU] = mu_b * (r2 @ D2 + 2 * r1 @ D - (L + 2) * Ident)
        block[:, sV] = mu_b * (2 * L * Ident)
        block[:, sP] = -(r2 @ D)
        target = r**2 * _data_at(f1[rkey], r, 0)
        for i in range(n1):
            add(block[i], target[i])
        if l >= 1:
            # tangential (grad_1) momentum (times r^2)
            block = np.zeros((n1, ntot))
            block[:, sV] = mu_b * (r2 @ D2 + 2 * r1 @ D - L * Ident)
            block[:, sU] = mu_b * 2 * Ident
            block[:, sP] = -r1
            target = r**2 * _data_at(f1[rkey], r, 1)
            for i in range(n1):
                add(block[i], target[i])
            # toroidal momentum (times r^2)
            block = np.zeros((n1, ntot))
            block[:, sT] = mu_b * (r2 @ D2 + 2 * r1 @ D - L * Ident)
            target = r**2 * _data_at(f1[rkey], r, 2)
            for i in range(n1):
                add(block[i], target[i])
        else:
            # no tangential fields at l = 0
            for s in (sl(regno, 1), sl(regno, 2)):
                block = np.zeros((n1, ntot))
                block[:, s] = np.eye(n1)
                for i in range(n1):
                    add(block[i], 0.0)
        # divergence (times r)
        block = np.zeros((n1, ntot))
        block[:, sU] = r1 @ D + 2 * Ident
        block[:, sV] = -L * Ident
        target = r * _data_at(f2[rkey], r)
        for i in range(n1):
            add(block[i], target[i])

    # index helpers: Chebyshev nodes run from r1 down to r0
    iU_in, iV_in, iT_in, iP_in = (sl(0, k) for k in range(4))
    iU_out, iV_out, iT_out, iP_out = (sl(1, k) for k in range(4))
    top_in = 0          # r = a in the inner region
    bot_out = n_nodes   # r = a in the outer region
    top_out = 0         # r = R

    def unit(slc: slice, node: int) -> np.ndarray:
        row = np.zeros(ntot)
        row[slc.start + node] = 1.0
        return row

    def deriv_row(slc: slice, reg: _Region, node: int, scale: float = 1.0):
        row = np.zeros(ntot)
        row[slc] = scale * reg.D[node]
        return row

    # continuity of velocity at r = a
    for sA, sB in ((iU_in, iU_out), (iV_in, iV_out), (iT_in, iT_out)):
        add(unit(sA, top_in) - unit(sB, bot_out), 0.0)
    # no-slip at r = R
    for s in (iU_out, iV_out, iT_out):
        add(unit(s, top_out), 0.0)

    if l >= 1:
        # spheroidal tangential balance:
        # mu((2-2L) Vs + 2 W)/a^2 - q/a + mu_b [[V' + (U - V)/a]] = f3_sph
        row = np.zeros(ntot)
        row += (mu * 2.0 / a**2) * unit(iU_in, top_in)
        row += (mu * (2.0 - 2.0 * L) / a**2) * unit(iV_in, top_in)
        row[iq] = -1.0 / a
        row += mu_b * (deriv_row(iV_out, reg_out, bot_out)
                       - deriv_row(iV_in, reg_in, top_in))
        row += (mu_b / a) * (unit(iU_out, bot_out) - unit(iU_in, top_in))
        row -= (mu_b / a) * (unit(iV_out, bot_out) - unit(iV_in, top_in))
        add(row, data.coeff("f3_sph", l, m))
        # toroidal balance: mu(2-L) Ts/a^2 + mu_b [[T' - T/a]] = f3_tor
        row = np.zeros(ntot)
        row += (mu * (2.0 - L) / a**2) * unit(iT_in, top_in)
        row += mu_b * (deriv_row(iT_out, reg_out, bot_out)
                       - deriv_row(iT_in, reg_in, top_in))
        row -= (mu_b / a) * (unit(iT_out, bot_out) - unit(iT_in, top_in))
        add(row, data.coeff("f3_tor", l, m))

    if system == "s1":
        # normal balance: 2mu(L Vs - 2W)/a^2 + 2q/a - [[P]] + 2 mu_b [[U']] = f3_nu
        row = np.zeros(ntot)
        row += (2 * mu * L / a**2) * unit(iV_in, top_in)
        row += (-4 * mu / a**2) * unit(iU_in, top_in)
        row[iq] = 2.0 / a
        row -= unit(iP_out, bot_out) - unit(iP_in, top_in)
        row += 2 * mu_b * (deriv_row(iU_out, reg_out, bot_out)
                           - deriv_row(iU_in, reg_in, top_in))
        add(row, data.coeff("f3_nu", l, m))
    else:
        add(unit(iU_in, top_in), data.coeff("f5", l, m))

    # surface incompressibility: -(L/a) Vs + (2/a) W = f4
    row = np.zeros(ntot)
    row += (2.0 / a) * unit(iU_in, top_in)
    row += (-L / a) * unit(iV_in, top_in)
    add(row, data.coeff("f4", l, m))

    # gauge rows for the l = 0 pressure constants
    if l == 0:
        win = reg_in.wq * reg_in.r**2
        wout = reg_out.wq * reg_out.r**2
        if system == "s1":
            row = np.zeros(ntot)
            row[iP_in] = win
            row[iP_out] = wout
            add(row, 0.0)   # int_Omega pi dx = 0
            row = np.zeros(ntot)
            row[iq] = -a**3 / 2.0
            row[iP_in] = win
            add(row, 0.0)   # int q/H dA = -int_inner pi dx
        else:
            row = np.zeros(ntot)
            row[iP_in] = win
            add(row, 0.0)   # int_inner pi dx = 0
            row = np.zeros(ntot)
            row[iP_in] = win
            row[iP_out] = wout
            add(row, 0.0)   # int_Omega pi dx = 0
            row = np.zeros(ntot)
            row[iq] = 1.0
            add(row, 0.0)   # int_Gamma q dA = 0

    A = np.array(rows)
    b = np.array(rhs)
    # row and column equilibration for the least-squares solve
    rnorm = np.linalg.norm(A, axis=1)
    rnorm[rnorm == 0] = 1.0
    A = A / rnorm[:, None]
    b = b / rnorm
    cnorm = np.linalg.norm(A, axis=0)
    cnorm[cnorm == 0] = 1.0
    A = A / cnorm[None, :]
    x, res, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    x = x / cnorm
    resid = float(np.linalg.norm((A * cnorm[None, :]) @ x - b))

    fields_in = {"U": x[iU_in], "V": x[iV_in], "T": x[iT_in], "P": x[iP_in]}
    fields_out = {"U": x[iU_out], "V": x[iV_out], "T": x[iT_out], "P": x[iP_out]}
    return CollocationSolution(
        l=l, m=m,
        W=float(x[iU_in][top_in]),
        Vs=float(x[iV_in][top_in]) if l >= 1 else 0.0,
        Ts=float(x[iT_in][top_in]) if l >= 1 else 0.0,
        Q=float(x[iq]),
        r_in=reg_in.r, r_out=reg_out.r,
        fields_in=fields_in, fields_out=fields_out,
        residual=resid)


# ---------------------------------------------------------------------------
# discrete inf-sup constants of the pressure coupling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfSupReport:
    l: int
    sigma_min: float
    null_dim: int
    n_nodes: int
    gauge_rows: bool
    null_vectors: np.ndarray | None = None


def _interp_matrix(n: int, m: int) -> np.ndarray:
    """Values at cheb(n) nodes -> values at cheb(m) nodes (same interval)."""
    _, xn = cheb(n)
    _, xm = cheb(m)
    Vn = np.polynomial.chebyshev.chebvander(xn, n)
    Vm = np.polynomial.chebyshev.chebvander(xm, n)
    return Vm @ np.linalg.inv(Vn)


def _pressure_coupling(l: int, domain: DomainSpec, n: int):
    """Matrix of (pi, q) -> velocity pairings -int pi div u - int q Div u.

    Velocity DOF: (U, V, T) nodes of degree n in both regions; pressure DOF:
    nodes of degree n-2 (the stable spectral pairing; equal order would
    manufacture spurious pressure modes) plus q.  The pairing integrals are
    polynomial, evaluated exactly on a doubled Clenshaw-Curtis grid.
    """
    a, R = domain.a, domain.r_outer
    L = l * (l + 1.0)
    reg_in = _region(0.0, a, n)
    reg_out = _region(a, R, n)
    n1 = n + 1
    npp = n - 1               # pressure nodes per region (degree n-2)
    nv = 6 * n1
    npz = 2 * npp + 1
    m = 2 * n + 2
    Iv = _interp_matrix(n, m)
    Ip = _interp_matrix(n - 2, m)

    G = np.zeros((npz, nv))
    for regno, (reg, (r0, r1)) in enumerate(
            ((reg_in, (0.0, a)), (reg_out, (a, R)))):
        fine = _region(r0, r1, m)
        wm = fine.wq
        rM = fine.r
        oU = regno * 3 * n1
        oV = oU + n1
        oP = regno * npp
        # -int P (U' + 2U/r - L V/r) r^2 dr, exact on the doubled grid
        div_u = np.diag(rM**2) @ Iv @ reg.D + 2.0 * np.diag(rM) @ Iv
        div_v = -L * np.diag(rM) @ Iv
        G[oP:oP + npp, oU:oU + n1] -= Ip.T @ np.diag(wm) @ div_u
        G[oP:oP + npp, oV:oV + n1] -= Ip.T @ np.diag(wm) @ div_v
    # q row: -q a^2 (2 W / a - L Vs / a); W = U_in(a), Vs = V_in(a)
    iq = 2 * npp
    G[iq, 0] -= a * 2.0            # U_in node at r = a (first Cheb node)
    G[iq, n1] += a * L             # V_in node at r = a
    return G, reg_in, reg_out


def _constrained_basis(l: int, n: int) -> np.ndarray:
    """Basis of the H1_0-conforming velocity subspace: traces continuous at
    r = a, zero at r = R.  Columns map reduced DOF to the full (U,V,T)x2
    layout."""
    n1 = n + 1
    nv = 6 * n1
    keep = np.ones(nv, dtype=bool)
    ties = {}
    for k in range(3):
        inner_a = k * n1 + 0          # inner node r = a
        outer_a = 3 * n1 + k * n1 + n  # outer node r = a
        outer_R = 3 * n1 + k * n1 + 0  # outer node r = R
        keep[outer_a] = False
        keep[outer_R] = False
        ties[outer_a] = inner_a
    idx = np.nonzero(keep)[0]
    B = np.zeros((nv, idx.size))
    col = {int(j): c for c, j in enumerate(idx)}
    for j in idx:
        B[j, col[int(j)]] = 1.0
    for dof, src in ties.items():
        B[dof, col[src]] = 1.0
    return B


def _norm_grams(l: int, domain: DomainSpec, n: int):
    """SPD Gram matrices of the discrete Y- and Z-norms per mode.

    Y: an H1-equivalent seminorm (radial derivatives plus l-weighted mass
    over r^-2) augmented with the surface tangential gradient; Z: L2 of the
    pressures with the |Omega|^(1/3)-weighted membrane term.  Fixed spectral
    equivalence constants per degree keep refinement comparisons meaningful.
    """
    a, R = domain.a, domain.r_outer
    L = l * (l + 1.0)
    reg_in = _region(0.0, a, n)
    reg_out = _region(a, R, n)
    n1 = n + 1
    npp = n - 1
    nv = 6 * n1
    npz = 2 * npp + 1
    vol13 = ((4.0 / 3.0) * np.pi * R**3) ** (1.0 / 3.0)
    m = 2 * n + 2
    Iv = _interp_matrix(n, m)
    Ip = _interp_matrix(n - 2, m)

    Ygram = np.zeros((nv, nv))
    Zgram = np.zeros((npz, npz))
    for regno, (reg, (r0, r1)) in enumerate(
            ((reg_in, (0.0, a)), (reg_out, (a, R)))):
        fine = _region(r0, r1, m)
        wr2 = np.diag(fine.wq * fine.r**2)
        base = regno * 3 * n1
        K_d = (Iv @ reg.D).T @ wr2 @ (Iv @ reg.D)
        K_m = (L + 1.0) * Iv.T @ np.diag(fine.wq) @ Iv
        for k, ang in ((0, 1.0), (1, L), (2, L)):
            s = slice(base + k * n1, base + (k + 1) * n1)
            Ygram[s, s] += ang * (K_d + K_m)
        sz = slice(regno * npp, (regno + 1) * npp)
        Zgram[sz, sz] += Ip.T @ wr2 @ Ip
    # surface term |Omega|^(1/3) * ||grad_g v||^2 = vol13 * L(L-1)(Vs^2+Ts^2)
    iVs, iTs = n1, 2 * n1
    Ygram[iVs, iVs] += vol13 * L * max(L - 1.0, 0.0)
    Ygram[iTs, iTs] += vol13 * L * max(L - 1.0, 0.0)
    Zgram[2 * npp, 2 * npp] = a**2 / vol13
    return Ygram, Zgram


def infsup_report(l: int, params: MaterialParams, domain: DomainSpec,
                  n_nodes: int = 32, gauge_rows: bool = True) -> InfSupReport:
    """Singular-value analysis of the per-mode pressure-gradient operator."""
    import scipy.linalg as sla

    G, reg_in, reg_out = _pressure_coupling(l, domain, n_nodes)
    Ygram, Zgram = _norm_grams(l, domain, n_nodes)
    B = _constrained_basis(l, n_nodes)
    G = G @ B
    Ygram = B.T @ Ygram @ B
    npp = n_nodes - 1
    if gauge_rows and l == 0:
        m = 2 * n_nodes + 2
        Ip = _interp_matrix(n_nodes - 2, m)
        fin = _region(0.0, domain.a, m)
        fout = _region(domain.a, domain.r_outer, m)
        win = Ip.T @ (fin.wq * fin.r**2)     # exact int P r^2 dr, inner
        wout = Ip.T @ (fout.wq * fout.r**2)
        extra = np.zeros((2, G.shape[0]))
        extra[0, :npp] = win
        extra[0, npp:2 * npp] = wout
        extra[1, :npp] = win
        extra[1, 2 * npp] = -domain.a**3 / 2.0
    else:
        extra = None

    # generalized singular values: sigma = singular values of
    # Lz^-1 G Ly^-T with Gram = L L^T (Cholesky)
    Ly = np.linalg.cholesky(Ygram + 1e-14 * np.trace(Ygram) / Ygram.shape[0]
                            * np.eye(Ygram.shape[0]))
    Lz = np.linalg.cholesky(Zgram)
    Gt = sla.solve_triangular(Lz, G, lower=True)
    Gt = sla.solve_triangular(Ly, Gt.T, lower=True).T
    if extra is not None:
        Et = sla.solve_triangular(Lz, extra.T, lower=True)  # (npz, 2)
        Gt = np.hstack([Gt, Et])
    svals = np.linalg.svd(Gt, compute_uv=False)
    smax = svals[0]
    null = svals < 1e-8 * smax
    null_dim = int(null.sum())
    sigma_min = float(svals[~null][-1]) if (~null).any() else 0.0

    null_vectors = None
    if null_dim > 0:
        Uz, _, _ = np.linalg.svd(Gt)
        zs = Uz[:, -null_dim:].T   # whitened z-coordinates
        null_vectors = np.array([
            sla.solve_triangular(Lz, z, lower=True, trans="T") for z in zs])
    return InfSupReport(l=l, sigma_min=sigma_min, null_dim=null_dim,
                        n_nodes=n_nodes, gauge_rows=gauge_rows,
                        null_vectors=null_vectors)


def infsup_mode(l: int, params: MaterialParams, domain: DomainSpec,
                n_nodes: int = 32) -> float:
    """Smallest non-gauge singular value of the per-mode (div, Div) coupling."""
    return infsup_report(l, params, domain, n_nodes).sigma_min
