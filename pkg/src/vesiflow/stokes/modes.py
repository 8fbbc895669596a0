"""Exact per-mode solver for the coupled bulk-surface Stokes systems on a
round membrane of radius a inside a concentric rigid container of radius
r_outer.

Per real harmonic (l, m) the bulk fields separate into

    u = U(r) Y r_hat + V(r) grad_1 Y + T(r) (r_hat x grad_1 Y),
    pi = P(r) Y,

where grad_1 is the unit-sphere gradient.  Homogeneous Stokes solutions are
spans of explicit radial monomials (interior-regular subset inside, full set
in the shell), body forces and sources with monomial radial profiles get
particular solutions from an exponent-shift solve, and the membrane
conditions close a small dense interface system per mode.

Interface rows (jump convention [[f]] = f_outer - f_inner, L = l(l+1)):

    continuity          U, V, T continuous at r = a, equal to (W, Vs, Ts)
    tangential sph.     mu ((2-2L) Vs + 2 W)/a^2 - Q/a + mu_b [[V' - V/r + U/r]] = f3_sph
    tangential tor.     mu (2-L) Ts / a^2 + mu_b [[T' - T/r]] = f3_tor
    normal (s1)         2 mu (L Vs - 2 W)/a^2 + (2/a) Q - [[P]] + 2 mu_b [[U']] = f3_nu
    incompressibility   -(L/a) Vs + (2/a) W = f4
    outer no-slip       U = V = T = 0 at r = r_outer
    prescribed trace    W = f5   (system s2, replacing the normal balance)

Internally everything is solved in units a = 1, mu_b = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import sphharm as sh
from ..sphharm import ShCoeffs
from ..surface import DomainSpec, MaterialParams, InvalidParameter
from ._mono import (m_add, m_diff, m_eval, m_eval_abs, m_int, m_mul,
                    m_scale, m_shift, m_zero)

INNER, OUTER = "in", "out"


class CompatibilityError(ValueError):
    """Data violate the integral compatibility conditions."""


class SolverDegenerate(RuntimeError):
    """A per-mode interface matrix is numerically singular."""


def _refined_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve with one step of iterative refinement."""
    x = np.linalg.solve(A, b)
    x += np.linalg.solve(A, b - A @ x)
    return x


class ResonantExponent(ValueError):
    """Radial forcing exponent collides with a homogeneous solution."""


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StokesData:
    """Right-hand sides of systems s1/s2, band-limited, radially monomial.

    f1 entries map (region, l, m) -> {p: (aU, aV, aT)} for the bulk force
    aU r^p Y r_hat + aV r^p grad_1 Y + aT r^p (r_hat x grad_1 Y); f2 entries
    map (region, l, m) -> {p: b}.  Interior exponents must keep the fields
    in L2 (p >= 0).
    """

    lmax: int
    f1: dict = field(default_factory=dict)
    f2: dict = field(default_factory=dict)
    f3_sph: ShCoeffs | None = None
    f3_tor: ShCoeffs | None = None
    f3_nu: ShCoeffs | None = None
    f4: ShCoeffs | None = None
    f5: ShCoeffs | None = None

    def __post_init__(self):
        for (region, l, m), entry in list(self.f1.items()) + list(self.f2.items()):
            if region not in (INNER, OUTER):
                raise InvalidParameter(f"unknown region {region!r}")
            if not (0 <= l <= self.lmax and -l <= m <= l):
                raise InvalidParameter(f"mode ({l}, {m}) outside the band limit")
            if region == INNER and any(p < 0 for p in entry):
                raise InvalidParameter("interior radial exponents must be >= 0")

    def coeff(self, name: str, l: int, m: int) -> float:
        c = getattr(self, name)
        return 0.0 if c is None else c.get(l, m)

    def active_modes(self):
        seen = set()
        for key in list(self.f1) + list(self.f2):
            seen.add((key[1], key[2]))
        for name in ("f3_sph", "f3_tor", "f3_nu", "f4", "f5"):
            c = getattr(self, name)
            if c is None:
                continue
            ls, ms = sh.degrees(c.lmax), sh.orders(c.lmax)
            for i in np.nonzero(c.values)[0]:
                seen.add((int(ls[i]), int(ms[i])))
        return sorted(seen)


def zero_data(lmax: int) -> StokesData:
    return StokesData(lmax)


@dataclass(frozen=True)
class CompatReport:
    comp1_defect: float
    comp2_defect: float
    comp3_defect: float
    passed: bool
    tolerance: float = 1e-10


@dataclass(frozen=True)
class ModeSolution:
    """Total radial profiles (monomial maps) of one (l, m) mode."""

    l: int
    m: int
    U: dict   # region -> monomial dict
    V: dict
    T: dict
    P: dict
    W: float
    Vs: float
    Ts: float
    Q: float
    sigma_min: float


@dataclass(frozen=True)
class StokesSolution:
    system: str
    gauge: str
    domain: DomainSpec
    params: MaterialParams
    lmax: int
    modes: dict
    w: ShCoeffs
    v_sph: ShCoeffs   # unit-sphere spheroidal potential (chart convention)
    v_tor: ShCoeffs
    q: ShCoeffs
    pi_const: dict    # region -> constant pressure (field value)

    def mode(self, l: int, m: int) -> ModeSolution | None:
        return self.modes.get((l, m))


@dataclass(frozen=True)
class ModeTable:
    """Per-degree normal-force mobility and gradient-flow relaxation rate."""

    ls: np.ndarray
    mobility: np.ndarray
    gamma: np.ndarray
    params: MaterialParams
    domain: DomainSpec


# ---------------------------------------------------------------------------
# compatibility conditions
# ---------------------------------------------------------------------------


def _region_integral_00(entry: dict, r0: float, r1: float) -> float:
    """integral of a monomial Y00-coefficient profile over a radial region."""
    # field = c(r) Y00; int dx = sqrt(4 pi) * int c r^2 dr
    return np.sqrt(4 * np.pi) * m_int(m_shift(entry, 2), r0, r1)


def check_compat(data: StokesData, system: str, domain: DomainSpec,
                 tol: float = 1e-10) -> CompatReport:
    """Residuals of the integral compatibility conditions, nondimensional.

    comp1: int_Gamma f4/H dA = -int_inner f2 dx  (sphere is CMC, H = -2/a)
    comp2: int_Omega f2 dx = 0
    comp3: int_inner f2 dx = int_Gamma f5 dA and int_Gamma (f4 + f5 H) dA = 0
    """
    a, R = domain.a, domain.r_outer
    f2_in = m_zero()
    f2_out = m_zero()
    for (region, l, m), entry in data.f2.items():
        if l == 0 and m == 0:
            tgt = f2_in if region == INNER else f2_out
            for p, c in entry.items():
                tgt[p] = tgt.get(p, 0.0) + c
    int_f2_in = _region_integral_00(f2_in, 0.0, a)
    int_f2_out = _region_integral_00(f2_out, a, R)

    root4pi = np.sqrt(4 * np.pi)
    int_f4 = data.coeff("f4", 0, 0) * root4pi * a**2
    int_f5 = data.coeff("f5", 0, 0) * root4pi * a**2
    H = -2.0 / a

    scale = max(abs(int_f2_in), abs(int_f2_out), abs(int_f4 / H),
                abs(int_f5), 1e-300)
    if scale <= 1e-300:
        scale = 1.0

    comp2 = (int_f2_in + int_f2_out) / scale
    if system == "s1":
        comp1 = (int_f4 / H + int_f2_in) / scale
        comp3 = 0.0
        passed = max(abs(comp1), abs(comp2)) <= tol
    elif system == "s2":
        d1 = (int_f2_in - int_f5) / scale
        d2 = (int_f4 + H * int_f5) / scale
        comp3 = max(abs(d1), abs(d2))
        comp1 = (int_f4 / H + int_f2_in) / scale
        passed = max(comp3, abs(comp2)) <= tol
    else:
        raise InvalidParameter(f"unknown system {system!r}")
    return CompatReport(comp1_defect=float(comp1), comp2_defect=float(comp2),
                        comp3_defect=float(comp3), passed=bool(passed),
                        tolerance=tol)


# ---------------------------------------------------------------------------
# homogeneous basis and particular solutions (a = 1, mu_b = 1 units)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _RadialMode:
    U: dict
    V: dict
    T: dict
    P: dict


def _basis(l: int, region: str) -> list[_RadialMode]:
    """Homogeneous Stokes solutions per mode (unit viscosity)."""
    z = m_zero()
    if l == 0:
        if region == INNER:
            return []
        # source mode u = r^-2 r_hat (gradient of -1/r), constant pressure
        return [_RadialMode(U={-2: 1.0}, V=z, T=z, P=z)]
    L = l * (l + 1.0)
    modes = []
    if region == INNER:
        modes.append(_RadialMode(U={l - 1: float(l)}, V={l - 1: 1.0}, T=z, P=z))
        modes.append(_RadialMode(
            U={l + 1: l / (2.0 * (2 * l + 3))},
            V={l + 1: (l + 3.0) / (2.0 * (l + 1) * (2 * l + 3))},
            T=z, P={l: 1.0}))
        modes.append(_RadialMode(U=z, V=z, T={l: 1.0}, P=z))
    else:
        modes.append(_RadialMode(U={l - 1: float(l)}, V={l - 1: 1.0}, T=z, P=z))
        modes.append(_RadialMode(
            U={l + 1: l / (2.0 * (2 * l + 3))},
            V={l + 1: (l + 3.0) / (2.0 * (l + 1) * (2 * l + 3))},
            T=z, P={l: 1.0}))
        modes.append(_RadialMode(U={-l - 2: -(l + 1.0)}, V={-l - 2: 1.0}, T=z, P=z))
        modes.append(_RadialMode(
            U={-l: (l + 1.0) / (2.0 * (2 * l - 1))},
            V={-l: (2.0 - l) / (2.0 * l * (2 * l - 1))},
            T=z, P={-l - 1: 1.0}))
        modes.append(_RadialMode(U=z, V=z, T={l: 1.0}, P=z))
        modes.append(_RadialMode(U=z, V=z, T={-l - 1: 1.0}, P=z))
    return modes


def _particular(l: int, f1_entry: dict, f2_entry: dict) -> _RadialMode:
    """Particular solution for monomial forcing (unit viscosity).

    f1_entry: {p: (aU, aV, aT)}; f2_entry: {p: b}.  Raises ResonantExponent
    when the shifted exponent collides with a homogeneous solution.
    """
    U, V, T, P = m_zero(), m_zero(), m_zero(), m_zero()
    L = l * (l + 1.0)
    for p, (aU, aV, aT) in (f1_entry or {}).items():
        if l == 0:
            if aU != 0.0:
                if p == -1:
                    raise ResonantExponent("l=0 radial force with p = -1")
                P = m_add(P, {p + 1: -aU / (p + 1.0)})
            continue
        if aU != 0.0 or aV != 0.0:
            A = np.array([
                [(p + 2.0) * (p + 3.0) - L - 2.0, 2.0 * L, -(p + 1.0)],
                [2.0, (p + 2.0) * (p + 3.0) - L, -1.0],
                [p + 4.0, -L, 0.0],
            ])
            if abs(np.linalg.det(A)) < 1e-9 * max(1.0, L) ** 2:
                raise ResonantExponent(f"spheroidal forcing exponent p={p} at l={l}")
            u, v, pc = np.linalg.solve(A, [aU, aV, 0.0])
            U = m_add(U, {p + 2: u})
            V = m_add(V, {p + 2: v})
            P = m_add(P, {p + 1: pc})
        if aT != 0.0:
            den = (p + 2.0) * (p + 3.0) - L
            if abs(den) < 1e-12 * max(1.0, L):
                raise ResonantExponent(f"toroidal forcing exponent p={p} at l={l}")
            T = m_add(T, {p + 2: aT / den})
    for s, b in (f2_entry or {}).items():
        if b == 0.0:
            continue
        if l == 0:
            if s == -3:
                raise ResonantExponent("l=0 source with p = -3")
            c = b / (s + 3.0)
            U = m_add(U, {s + 1: c})
            P = m_add(P, {s: 1.0 * b})
            continue
        A = np.array([
            [(s + 1.0) * (s + 2.0) - L - 2.0, 2.0 * L, -float(s)],
            [2.0, (s + 1.0) * (s + 2.0) - L, -1.0],
            [s + 3.0, -L, 0.0],
        ])
        if abs(np.linalg.det(A)) < 1e-9 * max(1.0, L) ** 2:
            raise ResonantExponent(f"source exponent p={s} at l={l}")
        u, v, pc = np.linalg.solve(A, [0.0, 0.0, b])
        U = m_add(U, {s + 1: u})
        V = m_add(V, {s + 1: v})
        P = m_add(P, {s: pc})
    return _RadialMode(U=U, V=V, T=T, P=P)


# ---------------------------------------------------------------------------
# per-mode interface systems (a = 1, mu_b = 1 units)
# ---------------------------------------------------------------------------


def _surface_rows(l: int, mu: float):
    """Coefficients of (W, Vs, Ts, Q) in the three membrane balances."""
    L = l * (l + 1.0)
    row_sph = {"W": 2.0 * mu, "Vs": (2.0 - 2.0 * L) * mu, "Q": -1.0}
    row_tor = {"Ts": (2.0 - L) * mu}
    row_nrm = {"W": -4.0 * mu, "Vs": 2.0 * mu * L, "Q": 2.0}
    return row_sph, row_tor, row_nrm


def _mode_system(l: int, mu: float, R: float, system: str,
                 part: dict, rhs_surface: dict):
    """Assemble the dense interface system for one l >= 1 mode.

    part: region -> _RadialMode particular; rhs_surface: the four surface
    data coefficients.  Unknowns: inner basis amplitudes, outer basis
    amplitudes, W, Vs, Ts, Q.
    """
    bin_ = _basis(l, INNER)
    bout = _basis(l, OUTER)
    nin, nout = len(bin_), len(bout)
    n = nin + nout + 4
    iW, iVs, iTs, iQ = nin + nout, nin + nout + 1, nin + nout + 2, nin + nout + 3
    A = np.zeros((n, n))
    b = np.zeros(n)
    pin, pout = part[INNER], part[OUTER]

    def fill(row, region, comp, r, deriv=False, scale=1.0):
        basis, off = (bin_, 0) if region == INNER else (bout, nin)
        for j, md in enumerate(basis):
            prof = getattr(md, comp)
            prof = m_diff(prof) if deriv else prof
            A[row, off + j] += scale * m_eval(prof, r)
        prof = getattr(pin if region == INNER else pout, comp)
        prof = m_diff(prof) if deriv else prof
        b[row] -= scale * m_eval(prof, r)

    row = 0
    # trace continuity: U, V, T equal the surface unknowns on both sides
    for region in (INNER, OUTER):
        for comp, iu in (("U", iW), ("V", iVs), ("T", iTs)):
            fill(row, region, comp, 1.0)
            A[row, iu] -= 1.0
            row += 1
    # outer no-slip
    for comp in ("U", "V", "T"):
        fill(row, OUTER, comp, R)
        row += 1
    # tangential momentum, spheroidal:
    # mu((2-2L)Vs + 2W) - Q + [[V' - V + U]] = f3_sph   (a=1, mu_b=1)
    row_sph, row_tor, row_nrm = _surface_rows(l, mu)
    for key, col in (("W", iW), ("Vs", iVs), ("Ts", iTs), ("Q", iQ)):
        A[row, col] += row_sph.get(key, 0.0)
    for region, sgn in ((OUTER, 1.0), (INNER, -1.0)):
        fill(row, region, "V", 1.0, deriv=True, scale=sgn)
        fill(row, region, "V", 1.0, scale=-sgn)
        fill(row, region, "U", 1.0, scale=sgn)
    b[row] += rhs_surface["f3_sph"]
    row += 1
    # tangential momentum, toroidal: mu(2-L)Ts + [[T' - T]] = f3_tor
    for key, col in (("W", iW), ("Vs", iVs), ("Ts", iTs), ("Q", iQ)):
        A[row, col] += row_tor.get(key, 0.0)
    for region, sgn in ((OUTER, 1.0), (INNER, -1.0)):
        fill(row, region, "T", 1.0, deriv=True, scale=sgn)
        fill(row, region, "T", 1.0, scale=-sgn)
    b[row] += rhs_surface["f3_tor"]
    row += 1
    if system == "s1":
        # normal balance: 2mu(L Vs - 2W) + 2Q - [[P]] + 2[[U']] = f3_nu
        for key, col in (("W", iW), ("Vs", iVs), ("Ts", iTs), ("Q", iQ)):
            A[row, col] += row_nrm.get(key, 0.0)
        for region, sgn in ((OUTER, 1.0), (INNER, -1.0)):
            fill(row, region, "P", 1.0, scale=-sgn)
            fill(row, region, "U", 1.0, deriv=True, scale=2.0 * sgn)
        b[row] += rhs_surface["f3_nu"]
    else:
        A[row, iW] = 1.0
        b[row] += rhs_surface["f5"]
    row += 1
    # surface incompressibility: -L Vs + 2 W = f4
    L = l * (l + 1.0)
    A[row, iVs] = -L
    A[row, iW] = 2.0
    b[row] += rhs_surface["f4"]
    return A, b, (iW, iVs, iTs, iQ), bin_, bout


def _mode_system_l0(mu: float, R: float, system: str,
                    part: dict, rhs: dict, a_dim: float):
    """l = 0 block: unknowns [c_shell, kap_in, kap_out, Q, W].

    kap_* are Y00 coefficients of the constant region pressures.  The two
    gauge rows realize the E / E_nu normalizations; redundant rows (inner
    trace, incompressibility) hold by compatibility and are checked after
    the solve.  The mixed pi/q gauge condition int q/H dA = -int pi dx is
    imposed in the caller's dimensional units, hence the explicit a_dim in
    that row (pi and q carry different physical dimensions).
    """
    pin, pout = part[INNER], part[OUTER]
    A = np.zeros((5, 5))
    b = np.zeros(5)
    ic, ikin, ikout, iQ, iW = range(5)
    int_pin = m_int(m_shift(pin.P, 2), 0.0, 1.0)
    int_pout = m_int(m_shift(pout.P, 2), 1.0, R)
    # no-slip: c/R^2 + Up_out(R) = 0
    A[0, ic] = 1.0 / R**2
    b[0] = -m_eval(pout.U, R)
    # gauge comp2: int_Omega pi dx = 0
    A[1, ikin] = 1.0 / 3.0
    A[1, ikout] = (R**3 - 1.0) / 3.0
    b[1] = -(int_pin + int_pout)
    if system == "s1":
        # outer trace: c + Up_out(1) = W
        A[2, ic] = 1.0
        A[2, iW] = -1.0
        b[2] = -m_eval(pout.U, 1.0)
        # -4 mu W + 2 Q - [[P]] + 2 [[U']] = f3_nu; the shell mode enters
        # through [[U']] with d(c r^-2)/dr = -2 c at r = 1
        A[3, iW] = -4.0 * mu
        A[3, iQ] = 2.0
        A[3, ikout] = -1.0
        A[3, ikin] = 1.0
        A[3, ic] = 2.0 * (-2.0)
        b[3] = (rhs["f3_nu"]
                + m_eval(pout.P, 1.0) - m_eval(pin.P, 1.0)
                - 2.0 * (m_eval(m_diff(pout.U), 1.0) - m_eval(m_diff(pin.U), 1.0)))
        # gauge comp1 with (pi, q): int q/H dA = -int_inner pi dx; in the
        # scaled variables (q ~ mu_b, pi ~ mu_b/a) this keeps one a_dim:
        # -(a_dim/2) Q + kap_in / 3 + int Pp_in r^2 dr = 0
        A[4, iQ] = -0.5 * a_dim
        A[4, ikin] = 1.0 / 3.0
        b[4] = -int_pin
    else:
        # prescribed trace; outer-trace row becomes a compatibility check
        A[2, iW] = 1.0
        b[2] = rhs["f5"]
        # gauge E_nu: int_inner pi = 0 and int_Gamma q = 0
        A[3, ikin] = 1.0 / 3.0
        b[3] = -int_pin
        A[4, iQ] = 1.0
        b[4] = 0.0
    return A, b


# ---------------------------------------------------------------------------
# scaling helpers
# ---------------------------------------------------------------------------


def _scale_data_mode(data: StokesData, l: int, m: int, a: float, mu_b: float):
    """Nondimensionalize the (l, m) data: lengths / a, viscosities / mu_b."""
    f1_in, f1_out = {}, {}
    for region, tgt in ((INNER, f1_in), (OUTER, f1_out)):
        for p, (aU, aV, aT) in data.f1.get((region, l, m), {}).items():
            s = a ** (p + 2) / mu_b
            tgt[p] = (aU * s, aV * s, aT * s)
    f2_in, f2_out = {}, {}
    for region, tgt in ((INNER, f2_in), (OUTER, f2_out)):
        for p, bb in data.f2.get((region, l, m), {}).items():
            tgt[p] = bb * a ** (p + 1)
    rhs = {
        "f3_sph": data.coeff("f3_sph", l, m) * a / mu_b,
        "f3_tor": data.coeff("f3_tor", l, m) * a / mu_b,
        "f3_nu": data.coeff("f3_nu", l, m) * a / mu_b,
        "f4": data.coeff("f4", l, m) * a,
        "f5": data.coeff("f5", l, m),
    }
    return (f1_in, f2_in), (f1_out, f2_out), rhs


def _unscale_profile(prof: dict, a: float, field_scale: float) -> dict:
    """Back to dimensional units: r^p coefficient -> coeff * scale / a^p."""
    return {p: c * field_scale / a**p for p, c in prof.items()}


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def solve(data: StokesData, system: str, params: MaterialParams,
          domain: DomainSpec, lmax: int | None = None,
          check: bool = True) -> StokesSolution:
    """Solve s1 or s2 mode by mode; returns the gauge-fixed solution."""
    if lmax is None:
        lmax = data.lmax
    if check:
        rep = check_compat(data, system, domain)
        if not rep.passed:
            raise CompatibilityError(
                f"compatibility defects comp1={rep.comp1_defect:.3e} "
                f"comp2={rep.comp2_defect:.3e} comp3={rep.comp3_defect:.3e}")
    a, R = domain.a, domain.r_outer
    mu_b = params.mu_b
    mu_t = params.mu / (mu_b * a)   # Saffman-Delbrueck ratio
    Rt = R / a

    w = np.zeros(sh.n_coeffs(lmax))
    vsph = np.zeros(sh.n_coeffs(lmax))
    vtor = np.zeros(sh.n_coeffs(lmax))
    qc = np.zeros(sh.n_coeffs(lmax))
    pi_const = {INNER: 0.0, OUTER: 0.0}
    modes = {}

    for (l, m) in data.active_modes():
        if l > lmax:
            raise InvalidParameter("data exceed the requested band limit")
        (f1i, f2i), (f1o, f2o), rhs = _scale_data_mode(data, l, m, a, mu_b)
        part = {INNER: _particular(l, f1i, f2i),
                OUTER: _particular(l, f1o, f2o)}
        if l == 0:
            A, b = _mode_system_l0(mu_t, Rt, system, part, rhs, a)
            smin = float(np.linalg.svd(A, compute_uv=False)[-1])
            if smin < 1e-12 * np.linalg.norm(A):
                raise SolverDegenerate(f"l=0 block singular, sigma_min={smin:.3e}")
            x = _refined_solve(A, b)
            c_sh, kin, kout, Q, W = x
            Uo = m_add(m_scale({-2: 1.0}, c_sh), part[OUTER].U)
            sol = ModeSolution(
                l=0, m=0,
                U={INNER: _unscale_profile(part[INNER].U, a, 1.0),
                   OUTER: _unscale_profile(Uo, a, 1.0)},
                V={INNER: {}, OUTER: {}},
                T={INNER: {}, OUTER: {}},
                P={INNER: _unscale_profile(m_add(part[INNER].P, {0: kin}), a, mu_b / a),
                   OUTER: _unscale_profile(m_add(part[OUTER].P, {0: kout}), a, mu_b / a)},
                W=float(W), Vs=0.0, Ts=0.0, Q=float(Q * mu_b),
                sigma_min=smin)
            modes[(0, 0)] = sol
            w[sh.coeff_index(0, 0)] = sol.W
            qc[sh.coeff_index(0, 0)] = sol.Q
            pi_const[INNER] = kin * mu_b / a / np.sqrt(4 * np.pi)
            pi_const[OUTER] = kout * mu_b / a / np.sqrt(4 * np.pi)
            continue

        A, b, (iW, iVs, iTs, iQ), bin_, bout = _mode_system(
            l, mu_t, Rt, system, part, rhs)
        # column equilibration: the radial monomials spread over ~R^(2l)
        cs = np.abs(A).max(axis=0)
        cs[cs == 0] = 1.0
        Aeq = A / cs[None, :]
        svals = np.linalg.svd(Aeq, compute_uv=False)
        smin = float(svals[-1])
        if smin < 1e-12 * svals[0]:
            raise SolverDegenerate(
                f"mode ({l},{m}) interface matrix singular, sigma_min={smin:.3e}")
        x = _refined_solve(Aeq, b) / cs
        nin = len(bin_)
        profs = {}
        for region, basis, off in ((INNER, bin_, 0), (OUTER, bout, nin)):
            tot = {comp: getattr(part[region], comp) for comp in "UVTP"}
            for j, md in enumerate(basis):
                for comp in "UVTP":
                    tot[comp] = m_add(tot[comp], m_scale(getattr(md, comp), x[off + j]))
            profs[region] = tot
        sol = ModeSolution(
            l=l, m=m,
            U={r: _unscale_profile(profs[r]["U"], a, 1.0) for r in (INNER, OUTER)},
            V={r: _unscale_profile(profs[r]["V"], a, 1.0) for r in (INNER, OUTER)},
            T={r: _unscale_profile(profs[r]["T"], a, 1.0) for r in (INNER, OUTER)},
            P={r: _unscale_profile(profs[r]["P"], a, mu_b / a) for r in (INNER, OUTER)},
            W=float(x[iW]), Vs=float(x[iVs]), Ts=float(x[iTs]),
            Q=float(x[iQ] * mu_b),
            sigma_min=smin)
        modes[(l, m)] = sol
        i = sh.coeff_index(l, m)
        w[i] = sol.W
        # chart potentials: v_phys = Vs grad_1 Y + Ts (r_hat x grad_1 Y)
        # corresponds to Psi = (Vs/a) Y, Phi = (Ts/a) Y
        vsph[i] = sol.Vs / a
        vtor[i] = sol.Ts / a
        qc[i] = sol.Q

    return StokesSolution(
        system=system, gauge="E" if system == "s1" else "E_nu",
        domain=domain, params=params, lmax=lmax, modes=modes,
        w=ShCoeffs(lmax, w),
        v_sph=ShCoeffs(lmax, vsph, "spheroidal-tangent"),
        v_tor=ShCoeffs(lmax, vtor, "toroidal-tangent"),
        q=ShCoeffs(lmax, qc),
        pi_const=pi_const)


def solve_s1(data: StokesData, params: MaterialParams, domain: DomainSpec,
             lmax: int | None = None) -> StokesSolution:
    return solve(data, "s1", params, domain, lmax)


def solve_s2(data: StokesData, params: MaterialParams, domain: DomainSpec,
             lmax: int | None = None) -> StokesSolution:
    return solve(data, "s2", params, domain, lmax)


# ---------------------------------------------------------------------------
# residuals of the explicit strong form
# ---------------------------------------------------------------------------


def residual_report(sol: StokesSolution, data: StokesData) -> dict:
    """Max relative strong-form residuals over all modes and sample radii."""
    a, R = sol.domain.a, sol.domain.r_outer
    mu_b, mu = sol.params.mu_b, sol.params.mu
    out = {"bulk_momentum": 0.0, "bulk_div": 0.0, "tan_sph": 0.0,
           "tan_tor": 0.0, "normal": 0.0, "incompressibility": 0.0,
           "no_slip": 0.0, "continuity": 0.0}

    def radii(region):
        # inner samples stay away from r = 0: the equations hold there by
        # regularity, but terms like (U - V)/r^2 cancel catastrophically
        # when *evaluated* in floating point
        r0, r1 = (0.05 * a, a) if region == INNER else (a, R)
        return r0 + (r1 - r0) * (0.5 - 0.5 * np.cos(np.linspace(0, np.pi, 9)))

    for (l, m), md in sol.modes.items():
        L = l * (l + 1.0)
        f1 = {INNER: data.f1.get((INNER, l, m), {}),
              OUTER: data.f1.get((OUTER, l, m), {})}
        f2 = {INNER: data.f2.get((INNER, l, m), {}),
              OUTER: data.f2.get((OUTER, l, m), {})}
        f3s = data.coeff("f3_sph", l, m)
        f3t = data.coeff("f3_tor", l, m)
        f3n = data.coeff("f3_nu", l, m)
        # velocity scale with a mobility-based floor so that zero-velocity
        # (pure pressure) modes are judged against the force scale
        data_force = max(abs(f3s), abs(f3t), abs(f3n),
                         max((abs(v) * a for e in f1.values()
                              for t in e.values() for v in t), default=0.0))
        scale_u = max(abs(md.W), abs(md.Vs), abs(md.Ts),
                      a * data_force / mu_b,
                      a * abs(data.coeff("f4", l, m)),
                      abs(data.coeff("f5", l, m)), 1e-300)
        scale_f = max(mu_b * scale_u / a**2, data_force / a, 1e-300)
        for region in (INNER, OUTER):
            U, V, T, P = (md.U[region], md.V[region], md.T[region], md.P[region])
            dU, dV, dT, dP = m_diff(U), m_diff(V), m_diff(T), m_diff(P)
            d2U, d2V, d2T = m_diff(dU), m_diff(dV), m_diff(dT)
            f1U = {p: e[0] for p, e in f1[region].items()}
            f1V = {p: e[1] for p, e in f1[region].items()}
            f1T = {p: e[2] for p, e in f1[region].items()}
            for r in radii(region):
                # normalize each balance by the magnitude of its largest
                # term: the honest floating-point notion of "relative"
                tU = [mu_b * m_eval(d2U, r), 2 * mu_b * m_eval(dU, r) / r,
                      -mu_b * ((L + 2) * m_eval(U, r) - 2 * L * m_eval(V, r)) / r**2,
                      -m_eval(dP, r), -m_eval(f1U, r)]
                sU = max(scale_f, mu_b * m_eval_abs(d2U, r))
                out["bulk_momentum"] = max(out["bulk_momentum"], abs(sum(tU)) / sU)
                if l >= 1:
                    tV = [mu_b * m_eval(d2V, r), 2 * mu_b * m_eval(dV, r) / r,
                          -mu_b * (L * m_eval(V, r) - 2 * m_eval(U, r)) / r**2,
                          -m_eval(P, r) / r, -m_eval(f1V, r)]
                    tT = [mu_b * m_eval(d2T, r), 2 * mu_b * m_eval(dT, r) / r,
                          -mu_b * L * m_eval(T, r) / r**2, -m_eval(f1T, r)]
                    out["bulk_momentum"] = max(
                        out["bulk_momentum"],
                        abs(sum(tV)) / max(scale_f, mu_b * m_eval_abs(d2V, r)),
                        abs(sum(tT)) / max(scale_f, mu_b * m_eval_abs(d2T, r)))
                tD = [m_eval(dU, r), 2 * m_eval(U, r) / r,
                      -L * m_eval(V, r) / r, -m_eval(f2[region], r)]
                sD = max(scale_u / a, m_eval_abs(dU, r),
                         L * m_eval_abs(V, r) / r)
                out["bulk_div"] = max(out["bulk_div"], abs(sum(tD)) / sD)

        # interface rows (dimensional)
        jump = lambda prof: (m_eval(m_diff(prof[OUTER]), a)
                             - m_eval(m_diff(prof[INNER]), a))
        jval = lambda prof: m_eval(prof[OUTER], a) - m_eval(prof[INNER], a)
        f4 = data.coeff("f4", l, m)
        scale_f3 = max(mu_b * scale_u / a**2, abs(f3s), abs(f3t), abs(f3n))

        def balance(terms, key):
            sc = max(scale_f3, max(abs(t) for t in terms))
            out[key] = max(out[key], abs(sum(terms)) / sc)

        dv = lambda prof, reg: m_eval(m_diff(prof[reg]), a)
        ev = lambda prof, reg: m_eval(prof[reg], a)
        if l >= 1:
            balance([mu * ((2 - 2 * L) * md.Vs + 2 * md.W) / a**2, -md.Q / a,
                     mu_b * dv(md.V, OUTER), -mu_b * dv(md.V, INNER),
                     mu_b * (jval(md.U) - jval(md.V)) / a,
                     -f3s], "tan_sph")
            balance([mu * (2 - L) * md.Ts / a**2,
                     mu_b * dv(md.T, OUTER), -mu_b * dv(md.T, INNER),
                     -mu_b * jval(md.T) / a, -f3t], "tan_tor")
        if sol.system == "s1":
            balance([2 * mu * (L * md.Vs - 2 * md.W) / a**2, 2 * md.Q / a,
                     -ev(md.P, OUTER), ev(md.P, INNER),
                     2 * mu_b * dv(md.U, OUTER), -2 * mu_b * dv(md.U, INNER),
                     -f3n], "normal")
        r_inc = -(L / a) * md.Vs + (2 / a) * md.W - f4
        out["incompressibility"] = max(out["incompressibility"],
                                       abs(r_inc) / (scale_u / a))
        for comp in ("U", "V", "T"):
            prof = getattr(md, comp)
            out["no_slip"] = max(out["no_slip"],
                                 abs(m_eval(prof[OUTER], R)) / scale_u)
            out["continuity"] = max(out["continuity"], abs(jval(prof)) / scale_u)
        tgt = {"U": md.W, "V": md.Vs, "T": md.Ts}
        for comp, val in tgt.items():
            prof = getattr(md, comp)
            out["continuity"] = max(out["continuity"],
                                    abs(m_eval(prof[INNER], a) - val) / scale_u)
    return out


# ---------------------------------------------------------------------------
# dissipation, weak form, metric
# ---------------------------------------------------------------------------


def _bulk_pair_integral(l: int, md1: ModeSolution, md2: ModeSolution,
                        a: float, R: float) -> float:
    """Polarized integral of <Du1, Du2> over both bulk regions (per mode)."""
    L = l * (l + 1.0)
    total = 0.0
    for region, (r0, r1) in ((INNER, (0.0, a)), (OUTER, (a, R))):
        U1, V1, T1 = md1.U[region], md1.V[region], md1.T[region]
        U2, V2, T2 = md2.U[region], md2.V[region], md2.T[region]
        dU1, dV1, dT1 = m_diff(U1), m_diff(V1), m_diff(T1)
        dU2, dV2, dT2 = m_diff(U2), m_diff(V2), m_diff(T2)
        # shear profile s = V' - V/r + U/r, and toroidal t = T' - T/r
        s1 = m_add(dV1, m_scale(m_shift(V1, -1), -1.0), m_shift(U1, -1))
        s2 = m_add(dV2, m_scale(m_shift(V2, -1), -1.0), m_shift(U2, -1))
        t1 = m_add(dT1, m_scale(m_shift(T1, -1), -1.0))
        t2 = m_add(dT2, m_scale(m_shift(T2, -1), -1.0))
        integrand = m_add(
            m_mul(dU1, dU2),
            m_scale(m_add(m_mul(s1, s2), m_mul(t1, t2)), L / 2.0),
            m_shift(m_add(
                m_scale(m_mul(V1, V2), L * L - L),
                m_scale(m_mul(T1, T2), L * L / 2.0 - L),
                m_scale(m_add(m_mul(V1, U2), m_mul(U1, V2)), -L),
                m_scale(m_mul(U1, U2), 2.0),
            ), -2),
        )
        total += m_int(m_shift(integrand, 2), r0, r1)
    return total


def _surface_pair(l: int, md1: ModeSolution, md2: ModeSolution) -> float:
    """Polarized integral of <Du1, Du2>_g over the membrane (per mode)."""
    L = l * (l + 1.0)
    return ((L * L - L) * md1.Vs * md2.Vs
            + (L * L / 2.0 - L) * md1.Ts * md2.Ts
            - L * (md1.Vs * md2.W + md1.W * md2.Vs)
            + 2.0 * md1.W * md2.W)


def dissipation_pairing(sol1: StokesSolution, sol2: StokesSolution) -> float:
    """2 mu_b int <Du1,Du2> dx + 2 mu int <Du1,Du2>_g dA (the V-metric)."""
    params, domain = sol1.params, sol1.domain
    total = 0.0
    keys = set(sol1.modes) & set(sol2.modes)
    for (l, m) in keys:
        md1, md2 = sol1.modes[(l, m)], sol2.modes[(l, m)]
        total += 2.0 * params.mu_b * _bulk_pair_integral(l, md1, md2,
                                                         domain.a, domain.r_outer)
        total += 2.0 * params.mu * _surface_pair(l, md1, md2)
    return total


def dissipation(sol: StokesSolution, params: MaterialParams | None = None) -> float:
    """Total viscous dissipation of a solution; nonnegative by coercivity."""
    return dissipation_pairing(sol, sol)


def gradient_norm_bulk(sol: StokesSolution) -> float:
    """integral of |grad u|^2 over both bulk regions (all modes)."""
    a, R = sol.domain.a, sol.domain.r_outer
    total = 0.0
    for (l, m), md in sol.modes.items():
        L = l * (l + 1.0)
        for region, (r0, r1) in ((INNER, (0.0, a)), (OUTER, (a, R))):
            U, V, T = md.U[region], md.V[region], md.T[region]
            dU, dV, dT = m_diff(U), m_diff(V), m_diff(T)
            # -u . (vector Laplacian of u), plus boundary flux
            lapU = m_add(m_diff(dU), m_scale(m_shift(dU, -1), 2.0),
                         m_shift(m_add(m_scale(U, -(L + 2.0)), m_scale(V, 2.0 * L)), -2))
            lapV = m_add(m_diff(dV), m_scale(m_shift(dV, -1), 2.0),
                         m_shift(m_add(m_scale(V, -L), m_scale(U, 2.0)), -2))
            lapT = m_add(m_diff(dT), m_scale(m_shift(dT, -1), 2.0),
                         m_scale(m_shift(T, -2), -L))
            vol = m_add(m_mul(U, lapU), m_scale(m_add(m_mul(V, lapV),
                                                      m_mul(T, lapT)), L))
            total -= m_int(m_shift(vol, 2), r0, r1)
            flux = m_add(m_mul(U, dU), m_scale(m_add(m_mul(V, dV),
                                                     m_mul(T, dT)), L))
            total += (m_eval(m_shift(flux, 2), r1) - m_eval(m_shift(flux, 2), r0)
                      if r0 > 0 else m_eval(m_shift(flux, 2), r1))
    return total


def weak_rhs(data: StokesData, sol_test: StokesSolution, domain: DomainSpec) -> float:
    """F(phi) = -int f3.phi dA - int f1.phi dx for a solution-shaped test field."""
    a = domain.a
    total = 0.0
    for (l, m), md in sol_test.modes.items():
        L = l * (l + 1.0)
        total -= a**2 * (data.coeff("f3_nu", l, m) * md.W
                         + L * (data.coeff("f3_sph", l, m) * md.Vs
                                + data.coeff("f3_tor", l, m) * md.Ts))
        for region, (r0, r1) in ((INNER, (0.0, a)), (OUTER, (a, domain.r_outer))):
            entry = data.f1.get((region, l, m), {})
            if not entry:
                continue
            f1U = {p: e[0] for p, e in entry.items()}
            f1V = {p: e[1] for p, e in entry.items()}
            f1T = {p: e[2] for p, e in entry.items()}
            vol = m_add(m_mul(f1U, md.U[region]),
                        m_scale(m_add(m_mul(f1V, md.V[region]),
                                      m_mul(f1T, md.T[region])), L))
            total -= m_int(m_shift(vol, 2), r0, r1)
    return total


def weak_bilinear(sol1: StokesSolution, sol2: StokesSolution) -> float:
    """B(u1, u2), identical to the dissipation pairing."""
    return dissipation_pairing(sol1, sol2)


# ---------------------------------------------------------------------------
# Neumann-to-Dirichlet map and spectrum
# ---------------------------------------------------------------------------


def ntd_apply(psi: ShCoeffs, params: MaterialParams, domain: DomainSpec) -> ShCoeffs:
    """w = u . nu for the s1 solve with f3 = psi nu; diagonal per degree."""
    data = StokesData(psi.lmax, f3_nu=psi)
    sol = solve(data, "s1", params, domain, check=False)
    return sol.w


def mobility(l: int, params: MaterialParams, domain: DomainSpec) -> float:
    """M_l > 0 with w_lm = -M_l psi_lm for l >= 1 (M_0 = 0)."""
    if l == 0:
        return 0.0
    psi = sh.delta(max(l, 2), l, 0)
    w = ntd_apply(psi, params, domain)
    return -w.get(l, 0)


def metric_V(w1: ShCoeffs, w2: ShCoeffs, params: MaterialParams,
             domain: DomainSpec, tol: float = 1e-10) -> float:
    """Riemannian metric <w1, w2>_V via the prescribed-trace solves."""
    a = domain.a
    for w in (w1, w2):
        drift = abs(w.get(0, 0)) * np.sqrt(4 * np.pi) * a**2
        if drift > tol * max(1.0, w.norm() * a**2):
            raise NotInTangentSpace(
                f"normal field violates the linearized constraints: "
                f"int w dA = {drift:.3e}")
    sols = []
    for w in (w1, w2):
        data = StokesData(w.lmax, f5=w)
        sols.append(solve(data, "s2", params, domain, check=False))
    return dissipation_pairing(sols[0], sols[1])


class NotInTangentSpace(ValueError):
    """Normal velocity violates the linearized area/volume constraints."""


def spectrum(params: MaterialParams, domain: DomainSpec, l_range) -> ModeTable:
    """Mobilities M_l and relaxation rates gamma_l = M_l E''_l / a^2.

    E''_l is the constrained second variation of the bending energy at the
    sphere along degree l, by centered finite differences (flow module).
    """
    from ..flow import energy_second_variation

    ls = np.array(sorted(l_range), dtype=int)
    M = np.array([mobility(int(l), params, domain) for l in ls])
    E2 = np.array([energy_second_variation(int(l), params, domain) for l in ls])
    gam = M * E2 / domain.a**2
    return ModeTable(ls=ls, mobility=M, gamma=gam, params=params, domain=domain)
