"""Constrained gradient-flow integration in the quasi-spherical regime.

The time stepper applies the frozen-sphere mode-wise mobility to the fully
nonlinear bending gradient, enforces the linearized area/volume constraints
with mobility-weighted Lagrange multipliers, and advects the height function.
Valid near the sphere; quantitative claims are made only there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kinematics, sphharm as sh
from . import surface as sf
from .sphharm import ShCoeffs
from .surface import (DomainSpec, EnergyReport, MaterialParams, SurfaceShape,
                      ShapeOutOfTubularNeighborhood)


class BlowUpDetected(RuntimeError):
    """Step failed after the maximum number of dt halvings."""

    def __init__(self, message: str, state: "FlowState"):
        super().__init__(message)
        self.state = state


class DegenerateConstraints(UserWarning):
    """Round-sphere constraint degeneracy: volume-only projection used."""


@dataclass(frozen=True)
class FlowState:
    t: float
    shape: SurfaceShape
    report: EnergyReport
    lambda1: float = 0.0
    lambda2: float = 0.0
    last_dissipation: float = 0.0


@dataclass(frozen=True)
class FlowConfig:
    dt_init: float
    t_end: float
    stepper: str = "euler"
    tol_constraint: float = 1e-10
    pin_translations: bool = True
    mobility: str = "frozen-sphere"
    max_halvings: int = 20
    snapshot_every: int = 0

    def __post_init__(self):
        if self.dt_init <= 0 or self.t_end < 0:
            raise sf.InvalidParameter("times must be positive")
        if self.tol_constraint < 1e-12:
            raise sf.InvalidParameter("tol_constraint must be >= 1e-12")
        if self.stepper not in ("euler", "rk4", "imex-exponential"):
            raise sf.InvalidParameter(f"unknown stepper {self.stepper!r}")
        if self.mobility != "frozen-sphere":
            raise sf.InvalidParameter("only the frozen-sphere mobility exists")


@dataclass(frozen=True)
class MobilityTable:
    """Frozen-sphere mobilities per degree plus relaxation rates."""

    lmax: int
    M: np.ndarray        # per degree, M[0] = 0 (true map)
    gamma: np.ndarray    # per degree, 0 for l <= 1
    params: MaterialParams
    domain: DomainSpec

    def per_coeff(self, lmax: int, pinned: bool, m0_positive: bool) -> np.ndarray:
        """Mobility per packed coefficient slot.

        m0_positive replaces M_0 by M_2 (the projection operator needs an
        invertible action on constants); pinned zeroes degree 1.
        """
        M = self.M[: lmax + 1].copy()
        if m0_positive:
            M[0] = self.M[2]
        if pinned and lmax >= 1:
            M[1] = 0.0
        ls = sh.degrees(lmax)
        return M[ls]


def build_mobility_table(params: MaterialParams, domain: DomainSpec,
                         lmax: int, with_gamma: bool = True) -> MobilityTable:
    from .stokes import mobility

    M = np.zeros(lmax + 1)
    gamma = np.zeros(lmax + 1)
    for l in range(1, lmax + 1):
        M[l] = mobility(l, params, domain)
    if with_gamma:
        for l in range(2, lmax + 1):
            gamma[l] = M[l] * energy_second_variation(l, params, domain) / domain.a**2
    return MobilityTable(lmax=lmax, M=M, gamma=gamma, params=params,
                         domain=domain)


# ---------------------------------------------------------------------------
# energy second variation at the sphere
# ---------------------------------------------------------------------------


def sphere_multipliers(params: MaterialParams, domain: DomainSpec):
    """(lambda1, lambda2) of the Helfrich equation at the round sphere,
    in the degenerate-CMC convention lambda2 = 0."""
    a, c0, kap = domain.a, params.c0, params.kappa
    grad_const = kap * c0 * (2.0 / a**2 + c0 / a)
    return -grad_const, 0.0


def energy_second_variation(l: int, params: MaterialParams,
                            domain: DomainSpec, eps: float | None = None) -> float:
    """Constrained second variation of the bending energy at the sphere
    along degree l, via centered differences of the Lagrangian
    F + lambda1 V - lambda2 A (stationary at the sphere, so the raw radial
    path gives the constrained Hessian)."""
    lam1, lam2 = sphere_multipliers(params, domain)
    lmax = max(l + 4, 8)
    a = domain.a
    if eps is None:
        eps = 1e-4 * a / max(1.0, (l / 4.0) ** 2)

    def lagrangian(h: ShCoeffs) -> float:
        shape = SurfaceShape(domain, h)
        rep = sf.energy_ch(shape, params)
        return rep.f_bend + lam1 * rep.volume - lam2 * rep.area

    base = sh.zeros(lmax)
    Lp = lagrangian(base.set(l, 0, eps))
    L0 = lagrangian(base)
    Lm = lagrangian(base.set(l, 0, -eps))
    return (Lp - 2.0 * L0 + Lm) / eps**2


# ---------------------------------------------------------------------------
# constraint projection
# ---------------------------------------------------------------------------


def project_constraints(shape: SurfaceShape, w: ShCoeffs,
                        table: MobilityTable, pin_translations: bool = True):
    """Return (w', lambda1, lambda2) with w' = w + M(lambda1 + lambda2 H)
    satisfying int w' dA = int w' H dA = 0 on the current shape.

    M is the frozen-sphere mobility acting mode-wise, with its l=0 entry
    replaced by M_2 so that constants are not annihilated.  On an exact
    sphere the two constraints are parallel; the projection then degrades
    to volume-only removal with a warning.
    """
    geom = shape.geometry
    grid = geom.grid
    mob = table.per_coeff(shape.lmax, pin_translations, m0_positive=True)

    w_field = grid.synth(w)
    ones = np.ones_like(w_field)
    H = geom.H

    m_one = ShCoeffs(shape.lmax, mob * sh.constant(shape.lmax, 1.0).values)
    m_H = ShCoeffs(shape.lmax,
                   mob * grid.analyze(H).truncated(shape.lmax).values)
    m_one_f = grid.synth(m_one)
    m_H_f = grid.synth(m_H)

    G = np.array([
        [geom.integrate(m_one_f), geom.integrate(m_H_f)],
        [geom.integrate(m_one_f * H), geom.integrate(m_H_f * H)],
    ])
    rhs = -np.array([geom.integrate(w_field), geom.integrate(w_field * H)])

    svals = np.linalg.svd(G, compute_uv=False)
    if svals[-1] < 1e-10 * max(svals[0], 1e-300):
        warnings.warn("constraints degenerate (CMC shape): volume-only "
                      "projection", DegenerateConstraints)
        lam1 = rhs[0] / G[0, 0]
        lam2 = 0.0
    else:
        lam1, lam2 = np.linalg.solve(G, rhs)
    corr = ShCoeffs(shape.lmax,
                    lam1 * m_one.values + lam2 * m_H.values)
    return w + corr, float(lam1), float(lam2)


# ---------------------------------------------------------------------------
# the step and the driver
# ---------------------------------------------------------------------------


def raw_velocity(shape: SurfaceShape, params: MaterialParams,
                 table: MobilityTable, pin_translations: bool = True):
    """w = -M grad F followed by the constraint projection."""
    geom = shape.geometry
    grad = sf.grad_l2_F(shape, params)
    psi = geom.grid.analyze(grad).truncated(shape.lmax)
    mob = table.per_coeff(shape.lmax, pin_translations, m0_positive=False)
    w_raw = ShCoeffs(shape.lmax, -mob * psi.values)
    return project_constraints(shape, w_raw, table, pin_translations)


def frozen_metric_pairing(w1: ShCoeffs, w2: ShCoeffs,
                          table: MobilityTable, domain: DomainSpec) -> float:
    """<w1, w2>_V in the frozen-sphere metric: sum a^2 w1 w2 / M_l, l >= 1."""
    lmax = w1.lmax
    ls = sh.degrees(lmax)
    M = table.M[: lmax + 1][ls]
    mask = (ls >= 1) & (M > 0)
    return float(domain.a**2 * np.sum(
        w1.values[mask] * w2.values[mask] / M[mask]))


def _rhs_coeffs(shape: SurfaceShape, params: MaterialParams,
                table: MobilityTable, pin: bool):
    """d h/dt coefficients (radial speed) and step diagnostics."""
    w, lam1, lam2 = raw_velocity(shape, params, table, pin)
    geom = shape.geometry
    w_field = geom.grid.synth(w)
    rho_dot = w_field * geom.W / geom.rho
    dh = geom.grid.analyze(rho_dot).truncated(shape.lmax)
    return dh, w, lam1, lam2


def step(state: FlowState, config: FlowConfig, params: MaterialParams,
         table: MobilityTable) -> FlowState:
    """One accepted step: the energy must not increase, else dt halves."""
    shape = state.shape
    dt = config.dt_init
    pin = config.pin_translations

    dh, w, lam1, lam2 = _rhs_coeffs(shape, params, table, pin)
    diss = frozen_metric_pairing(w, w, table, shape.domain)

    for _ in range(config.max_halvings + 1):
        try:
            h_new = _advance(shape, dh, w, dt, config, params, table, pin)
            new_shape = shape.with_h(h_new)
            rep = sf.energy_ch(new_shape, params)
        except (ShapeOutOfTubularNeighborhood, kinematics.StepTooLarge):
            dt *= 0.5
            continue
        if rep.f_bend <= state.report.f_bend * (1 + 1e-12) + 1e-14:
            return FlowState(t=state.t + dt, shape=new_shape, report=rep,
                             lambda1=lam1, lambda2=lam2,
                             last_dissipation=diss)
        dt *= 0.5
    raise BlowUpDetected(
        f"no energy-decreasing step found below dt = {dt:.3e}", state)


def _advance(shape, dh, w, dt, config, params, table, pin) -> ShCoeffs:
    if config.stepper == "euler":
        return shape.h + dt * dh
    if config.stepper == "rk4":
        k1 = dh
        s2 = shape.with_h(shape.h + (0.5 * dt) * k1)
        k2 = _rhs_coeffs(s2, params, table, pin)[0]
        s3 = shape.with_h(shape.h + (0.5 * dt) * k2)
        k3 = _rhs_coeffs(s3, params, table, pin)[0]
        s4 = shape.with_h(shape.h + dt * k3)
        k4 = _rhs_coeffs(s4, params, table, pin)[0]
        return shape.h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # imex-exponential: exact decay of the linearized modes, explicit
    # treatment of the nonlinear remainder N = dh + gamma h
    ls = sh.degrees(shape.lmax)
    gam = table.gamma[: shape.lmax + 1][ls]
    decay = np.exp(-gam * dt)
    phi1 = np.where(gam > 0, -np.expm1(-gam * dt) / np.where(gam > 0, gam, 1.0), dt)
    n_vals = dh.values + gam * shape.h.values
    return ShCoeffs(shape.lmax, decay * shape.h.values + phi1 * n_vals)


def initial_state(shape: SurfaceShape, params: MaterialParams) -> FlowState:
    return FlowState(t=0.0, shape=shape, report=sf.energy_ch(shape, params))


MONITOR_COLUMNS = ("t", "F", "area", "volume", "sigma", "dissipation",
                   "lambda1", "lambda2", "max_h", "helfrich_residual")


def monitor_row(state: FlowState, params: MaterialParams) -> dict:
    fit = helfrich_multipliers(state.shape, params)
    geom = state.shape.geometry
    return {
        "t": state.t,
        "F": state.report.f_bend,
        "area": state.report.area,
        "volume": state.report.volume,
        "sigma": state.report.sigma,
        "dissipation": state.last_dissipation,
        "lambda1": state.lambda1,
        "lambda2": state.lambda2,
        "max_h": float(np.abs(geom.rho - state.shape.domain.a).max()),
        "helfrich_residual": fit.residual,
    }


def run(config: FlowConfig, params: MaterialParams, domain: DomainSpec,
        init: SurfaceShape, table: MobilityTable | None = None):
    """Integrate to t_end; returns (states, monitor rows, blown_up flag)."""
    if table is None:
        table = build_mobility_table(
            params, domain, init.lmax,
            with_gamma=(config.stepper == "imex-exponential"))
    state = initial_state(init, params)
    states = [state]
    rows = [monitor_row(state, params)]
    blown_up = False
    while state.t < config.t_end * (1 - 1e-12):
        try:
            state = step(state, config, params, table)
        except BlowUpDetected as exc:
            blown_up = True
            state = exc.state
            break
        states.append(state)
        rows.append(monitor_row(state, params))
    return states, rows, blown_up


# ---------------------------------------------------------------------------
# equilibrium diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HelfrichFit:
    lambda1: float
    lambda2: float
    residual: float
    reduced: bool


def helfrich_multipliers(shape: SurfaceShape, params: MaterialParams) -> HelfrichFit:
    """Least-squares multipliers of grad F + lambda1 + lambda2 H = 0 in
    L2(Gamma); on CMC shapes the fit degenerates and lambda2 is dropped."""
    geom = shape.geometry
    grad = sf.grad_l2_F(shape, params)
    H = geom.H
    area = geom.integrate(np.ones_like(H))
    g11 = area
    g1h = geom.integrate(H)
    ghh = geom.integrate(H * H)
    # degeneracy measure: the variance of H over the shape
    var = ghh / area - (g1h / area) ** 2
    norm_grad = np.sqrt(max(geom.integrate(grad * grad), 0.0))
    scale = params.kappa / shape.domain.a**2
    reduced = var <= 1e-16 * (g1h / area) ** 2 + 1e-300
    if reduced:
        lam1 = -geom.integrate(grad) / area
        lam2 = 0.0
    else:
        G = np.array([[g11, g1h], [g1h, ghh]])
        rhs = -np.array([geom.integrate(grad), geom.integrate(grad * H)])
        lam1, lam2 = np.linalg.solve(G, rhs)
    defect = grad + lam1 + lam2 * H
    norm_def = np.sqrt(max(geom.integrate(defect * defect), 0.0))
    if norm_grad <= 1e-10 * scale * np.sqrt(area):
        residual = 0.0      # 0/0 guard: exact equilibrium
    else:
        residual = norm_def / norm_grad
    return HelfrichFit(lambda1=float(lam1), lambda2=float(lam2),
                       residual=float(residual), reduced=bool(reduced))
