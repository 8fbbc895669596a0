"""Nonlinear geometry, bending energetics and stress calculus for star-shaped
membranes r = a + h(omega) over a reference sphere.

Sign conventions (fixed here, used verbatim everywhere else):

* nu is the outward unit normal; the Weingarten relation is
  ``d nu / d x^alpha = -k_alpha^beta d X / d x^beta``, equivalently
  ``k_ab = <nu, d2 X/dx^a dx^b>``.  A round sphere of radius a then has
  ``k_ab = -(1/a) g_ab``, ``H = -2/a`` and ``K = 1/a^2``.
* The jump of a bulk quantity across the membrane is
  ``[[f]] = f_outer - f_inner``.
* The surface pressure q is a pressure: positive q pushes the membrane
  patch outward along its edge (a film under tension has q < 0).

With this convention the physics-literature mean curvature is -H/2 and a
spontaneous-curvature comparison may require c0 -> -c0.

All pointwise fields live on the shape's dealiased product grid; tangential
fields are carried either as unit-sphere potentials (spheroidal Psi,
toroidal Phi giving chart components v^theta = dPsi/dth - (1/s) dPhi/dph,
v^phi = ((1/s) dPsi/dph + dPhi/dth)/s) or as raw chart components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import sphharm as sh
from .sphharm import ShCoeffs, SphGrid


class InvalidParameter(ValueError):
    """Physical parameter outside its admissible range."""


class ShapeOutOfTubularNeighborhood(ValueError):
    """Height function leaves the admissible tubular neighborhood."""


@dataclass(frozen=True)
class MaterialParams:
    """Physical constants: bending rigidities, viscosities, densities (SI)."""

    kappa: float = 1.0
    kappa_g: float = 0.0
    c0: float = 0.0
    mu_b: float = 1.0
    mu: float = 0.01
    rho_b: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.mu_b <= 0 or self.mu <= 0:
            raise InvalidParameter("bulk and surface viscosities must be positive")
        if self.kappa <= 0:
            raise InvalidParameter("bending rigidity must be positive")
        if self.rho_b < 0 or self.rho < 0:
            raise InvalidParameter("densities must be nonnegative")


@dataclass(frozen=True)
class DomainSpec:
    """Reference sphere of radius a inside a concentric container."""

    a: float = 1.0
    r_outer: float = 4.0
    tubular_radius: float = 0.25

    def __post_init__(self):
        if not 0 < self.a < self.r_outer:
            raise InvalidParameter("need 0 < a < r_outer")
        if not 0 < self.tubular_radius < min(self.a, self.r_outer - self.a):
            raise InvalidParameter(
                "tubular radius must fit between the origin and the container"
            )


@dataclass(frozen=True)
class SurfaceShape:
    """Star-shaped membrane given by height coefficients over the sphere."""

    domain: DomainSpec
    h: ShCoeffs

    @property
    def lmax(self) -> int:
        return self.h.lmax

    @cached_property
    def geometry(self) -> "GeometryCache":
        return build_geometry(self)

    def with_h(self, h: ShCoeffs) -> "SurfaceShape":
        return SurfaceShape(self.domain, h)


def sphere_shape(domain: DomainSpec, lmax: int) -> SurfaceShape:
    return SurfaceShape(domain, sh.zeros(lmax))


@dataclass(frozen=True)
class SurfaceVelocity:
    """Membrane velocity u = v + w nu; v via unit-sphere potentials."""

    w: ShCoeffs
    v_sph: ShCoeffs | None = None
    v_tor: ShCoeffs | None = None


@dataclass(frozen=True)
class RateOfStrain:
    """Covariant components of the surface rate-of-strain on the grid."""

    d_tt: np.ndarray
    d_tp: np.ndarray
    d_pp: np.ndarray

    def trace(self, geom: "GeometryCache") -> np.ndarray:
        return (geom.ginv_tt * self.d_tt + 2 * geom.ginv_tp * self.d_tp
                + geom.ginv_pp * self.d_pp)

    def norm2(self, geom: "GeometryCache") -> np.ndarray:
        """|D u|_g^2 pointwise."""
        # raise both indices, contract with itself
        up_tt, up_tp, up_pp = _raise2(geom, self.d_tt, self.d_tp, self.d_pp)
        return up_tt * self.d_tt + 2 * up_tp * self.d_tp + up_pp * self.d_pp

    def pair(self, other: "RateOfStrain", geom: "GeometryCache") -> np.ndarray:
        up_tt, up_tp, up_pp = _raise2(geom, self.d_tt, self.d_tp, self.d_pp)
        return up_tt * other.d_tt + 2 * up_tp * other.d_tp + up_pp * other.d_pp


@dataclass(frozen=True)
class HybridStress:
    """Surface stress split into tangential ^tT^{ab} and normal ^nT^a parts.

    Components are contravariant chart components on the geometry grid.
    """

    t_tt: np.ndarray
    t_tp: np.ndarray
    t_pp: np.ndarray
    n_t: np.ndarray
    n_p: np.ndarray


@dataclass(frozen=True)
class EnergyReport:
    f_bend: float
    f_gauss: float
    area: float
    volume: float
    sigma: float


def _raise2(geom, t_tt, t_tp, t_pp):
    """Raise both indices of a symmetric covariant 2-tensor."""
    a, b, c = geom.ginv_tt, geom.ginv_tp, geom.ginv_pp
    up_tt = a * a * t_tt + 2 * a * b * t_tp + b * b * t_pp
    up_tp = a * b * t_tt + (a * c + b * b) * t_tp + b * c * t_pp
    up_pp = b * b * t_tt + 2 * b * c * t_tp + c * c * t_pp
    return up_tt, up_tp, up_pp


class GeometryCache:
    """All pointwise geometric fields of a star-shaped surface.

    Built on the dealiased product grid of the shape's band limit; immutable
    after construction.  Metric quantities are chart components in (theta,
    phi); everything here is exact at the nodes given the height coefficients.
    """

    def __init__(self, shape: SurfaceShape):
        dom = shape.domain
        grid = sh.product_grid(shape.lmax)
        self.grid = grid
        self.shape = shape
        a = dom.a

        h = shape.h
        rho = a + grid.synth(h)
        hmax = float(np.abs(rho - a).max())
        if hmax >= dom.tubular_radius:
            raise ShapeOutOfTubularNeighborhood(
                f"max |h| = {hmax:.3g} exceeds tubular radius "
                f"{dom.tubular_radius:.3g}"
            )
        h_p = sh.phi_derivative(h)
        rho_t = grid.synth_dtheta(h)
        rho_p = grid.synth(h_p)
        rho_tt = grid.synth_d2theta(h)
        rho_tp = grid.synth_dtheta(h_p)
        rho_pp = grid.synth(sh.phi_derivative(h_p))

        s = grid.sin_theta[:, None] * np.ones(grid.n_phi)[None, :]
        c = grid.x[:, None] * np.ones(grid.n_phi)[None, :]
        self.sin = s
        self.cos = c

        self.rho = rho
        self.rho_t, self.rho_p = rho_t, rho_p
        self.rho_tt, self.rho_tp, self.rho_pp = rho_tt, rho_tp, rho_pp

        grad2 = rho_t**2 + (rho_p / s) ** 2
        W = np.sqrt(rho**2 + grad2)
        self.W = W

        cp = np.cos(grid.phi)[None, :] * np.ones(grid.n_theta)[:, None]
        sp = np.sin(grid.phi)[None, :] * np.ones(grid.n_theta)[:, None]
        omega = np.stack([s * cp, s * sp, c])
        omega_t = np.stack([c * cp, c * sp, -s])
        omega_p = np.stack([-s * sp, s * cp, np.zeros_like(s)])
        self.omega = omega
        self.position = rho * omega
        self.x_t = rho_t * omega + rho * omega_t
        self.x_p = rho_p * omega + rho * omega_p
        # unit-sphere gradient vector of rho (tangent to the sphere)
        gvec = rho_t * omega_t + (rho_p / s**2) * omega_p
        self.nu = (rho * omega - gvec) / W

        # metric, inverse, area measure
        g_tt = rho**2 + rho_t**2
        g_tp = rho_t * rho_p
        g_pp = rho**2 * s**2 + rho_p**2
        det = g_tt * g_pp - g_tp**2
        self.g_tt, self.g_tp, self.g_pp = g_tt, g_tp, g_pp
        self.det = det
        self.ginv_tt = g_pp / det
        self.ginv_tp = -g_tp / det
        self.ginv_pp = g_tt / det
        self.area_density = rho * W          # dA / dOmega
        self.jac = self.area_density * s     # sqrt(det g)

        # second fundamental form k_ab = <nu, X_ab> via the covariant
        # unit-sphere Hessian of rho
        hess_tt = rho_tt
        hess_tp = rho_tp - (c / s) * rho_p
        hess_pp = rho_pp + s * c * rho_t
        self.k_tt = (rho * hess_tt - rho**2 - 2 * rho_t**2) / W
        self.k_tp = (rho * hess_tp - 2 * rho_t * rho_p) / W
        self.k_pp = (rho * hess_pp - rho**2 * s**2 - 2 * rho_p**2) / W

        # shape operator (mixed), twice mean curvature, Gauss curvature
        self.H = (self.ginv_tt * self.k_tt + 2 * self.ginv_tp * self.k_tp
                  + self.ginv_pp * self.k_pp)
        self.K = (self.k_tt * self.k_pp - self.k_tp**2) / det

        # partial derivatives of the metric components (plain partials)
        self.dg = {
            ("tt", "t"): 2 * rho * rho_t + 2 * rho_t * rho_tt,
            ("tt", "p"): 2 * rho * rho_p + 2 * rho_t * rho_tp,
            ("tp", "t"): rho_tt * rho_p + rho_t * rho_tp,
            ("tp", "p"): rho_tp * rho_p + rho_t * rho_pp,
            ("pp", "t"): 2 * rho * rho_t * s**2 + 2 * rho**2 * s * c
            + 2 * rho_p * rho_tp,
            ("pp", "p"): 2 * rho * rho_p * s**2 + 2 * rho_p * rho_pp,
        }
        # Christoffel symbols of the surface metric
        gi = {("t", "t"): self.ginv_tt, ("t", "p"): self.ginv_tp,
              ("p", "t"): self.ginv_tp, ("p", "p"): self.ginv_pp}
        canon = {"tt": "tt", "tp": "tp", "pt": "tp", "pp": "pp"}

        def dgc(al, be, ga):
            return self.dg[(canon[al + be], ga)]

        self.gamma = {}
        for ga in ("t", "p"):
            for al in ("t", "p"):
                for be in ("t", "p"):
                    tot = np.zeros_like(rho)
                    for de in ("t", "p"):
                        tot += gi[(ga, de)] * (
                            dgc(be, de, al) + dgc(al, de, be) - dgc(al, be, de)
                        )
                    self.gamma[(ga, al, be)] = 0.5 * tot

        # derivatives of the area density rho*W (for weak-form extraction)
        w2_t = (2 * rho * rho_t + 2 * rho_t * rho_tt
                + 2 * rho_p * rho_tp / s**2 - 2 * c / s**3 * rho_p**2)
        w2_p = (2 * rho * rho_p + 2 * rho_t * rho_tp + 2 * rho_p * rho_pp / s**2)
        self.W_t = 0.5 * w2_t / W
        self.W_p = 0.5 * w2_p / W
        self.ad_t = rho_t * W + rho * self.W_t   # d(rho W)/dtheta
        self.ad_p = rho_p * W + rho * self.W_p

    # -- scalar calculus ---------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Surface integral of a pointwise field over Gamma."""
        return self.grid.integrate(f * self.area_density)

    def scalar_derivs(self, coeffs: ShCoeffs):
        """(f, f_t, f_p) grids of a coefficient field."""
        g = self.grid
        return g.synth(coeffs), g.synth_dtheta(coeffs), g.synth(sh.phi_derivative(coeffs))

    def grad_chart(self, f_t: np.ndarray, f_p: np.ndarray):
        """Contravariant chart components of grad_g f from partials."""
        vt = self.ginv_tt * f_t + self.ginv_tp * f_p
        vp = self.ginv_tp * f_t + self.ginv_pp * f_p
        return vt, vp

    def div_chart(self, vt: np.ndarray, vp: np.ndarray,
                  dvt_t: np.ndarray, dvp_p: np.ndarray) -> np.ndarray:
        """div_g v from chart components and their relevant partials."""
        dlnj_t = self.ad_t / self.area_density + self.cos / self.sin
        dlnj_p = self.ad_p / self.area_density
        return dvt_t + dvp_p + vt * dlnj_t + vp * dlnj_p

    def laplacian_field(self, coeffs: ShCoeffs) -> np.ndarray:
        """Delta_g f pointwise for a coefficient field (surface metric)."""
        g = self.grid
        f_t = g.synth_dtheta(coeffs)
        cp = sh.phi_derivative(coeffs)
        f_p = g.synth(cp)
        f_tt = g.synth_d2theta(coeffs)
        f_tp = g.synth_dtheta(cp)
        f_pp = g.synth(sh.phi_derivative(cp))
        a, b, cc = self.ginv_tt, self.ginv_tp, self.ginv_pp
        vt = a * f_t + b * f_p
        vp = b * f_t + cc * f_p
        # partials of ginv from dginv = -ginv dg ginv
        da_t, db_t, dc_t = self._dginv("t")
        da_p, db_p, dc_p = self._dginv("p")
        dvt_t = da_t * f_t + a * f_tt + db_t * f_p + b * f_tp
        dvp_p = db_p * f_t + b * f_tp + dc_p * f_p + cc * f_pp
        return self.div_chart(vt, vp, dvt_t, dvp_p)

    def _dginv(self, direction: str):
        """Partials of the inverse-metric components along theta or phi."""
        a, b, c = self.g_tt, self.g_tp, self.g_pp
        da = self.dg[("tt", direction)]
        db = self.dg[("tp", direction)]
        dc = self.dg[("pp", direction)]
        det = self.det
        ddet = da * c + a * dc - 2 * b * db
        return (
            dc / det - c * ddet / det**2,
            -db / det + b * ddet / det**2,
            da / det - a * ddet / det**2,
        )

    # -- weak-form divergence of hybrid tensors -----------------------------

    def weak_hybrid_div(self, T: HybridStress) -> np.ndarray:
        """Cartesian components of Div T via the adjoint (weak) pairing.

        Uses int (Div T)^i Y dOmega = -int T^i_a g^{ab} d_b(Y/(rho W)) dA,
        which needs no derivatives of the tensor components; the integrands
        are smooth invariant scalars, so the quadrature is spectrally
        accurate and pole-safe.
        """
        g = self.grid
        ad = self.area_density
        sig_t = -self.ad_t / ad**2   # partials of sigma = 1/(rho W)
        sig_p = -self.ad_p / ad**2
        out = np.empty((3, g.n_theta, g.n_phi))
        for i in range(3):
            w_t = (T.t_tt * self.x_t[i] + T.t_tp * self.x_p[i]
                   + T.n_t * self.nu[i])
            w_p = (T.t_tp * self.x_t[i] + T.t_pp * self.x_p[i]
                   + T.n_p * self.nu[i])
            pair = g.analyze_gradient_pairing(w_t, w_p * self.sin)
            bulk = g.analyze(ad * (w_t * sig_t + w_p * sig_p))
            coeffs = ShCoeffs(g.lmax, -(pair.values + bulk.values))
            out[i] = g.synth(coeffs)
        return out


def build_geometry(shape: SurfaceShape) -> GeometryCache:
    """Construct the full geometric cache (validates admissibility)."""
    return GeometryCache(shape)


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------


def velocity_chart(vel: SurfaceVelocity, geom: GeometryCache):
    """Chart components (v^theta, v^phi) and their partial derivatives.

    Everything is synthesized from the potentials, so the values are exact
    at the nodes for band-limited potentials.
    """
    g = geom.grid
    s, c = geom.sin, geom.cos
    zero = np.zeros((g.n_theta, g.n_phi))
    psi_t = psi_p = psi_tt = psi_tp = psi_pp = zero
    phi_t = phi_p = phi_tt = phi_tp = phi_pp = zero
    if vel.v_sph is not None:
        p = vel.v_sph
        pp = sh.phi_derivative(p)
        psi_t, psi_p = g.synth_dtheta(p), g.synth(pp)
        psi_tt = g.synth_d2theta(p)
        psi_tp = g.synth_dtheta(pp)
        psi_pp = g.synth(sh.phi_derivative(pp))
    if vel.v_tor is not None:
        p = vel.v_tor
        pp = sh.phi_derivative(p)
        phi_t, phi_p = g.synth_dtheta(p), g.synth(pp)
        phi_tt = g.synth_d2theta(p)
        phi_tp = g.synth_dtheta(pp)
        phi_pp = g.synth(sh.phi_derivative(pp))

    vt = psi_t - phi_p / s
    vp = (psi_p / s + phi_t) / s
    dvt_t = psi_tt + (c / s**2) * phi_p - phi_tp / s
    dvt_p = psi_tp - phi_pp / s
    dvp_t = (psi_tp / s**2 - 2 * c / s**3 * psi_p + phi_tt / s
             - (c / s**2) * phi_t)
    dvp_p = psi_pp / s**2 + phi_tp / s
    return vt, vp, dvt_t, dvt_p, dvp_t, dvp_p


def covariant_velocity_gradient(vel: SurfaceVelocity, geom: GeometryCache):
    """v_{a;b} covariant components (a = component, b = derivative)."""
    vt, vp, dvt_t, dvt_p, dvp_t, dvp_p = velocity_chart(vel, geom)
    dv = {("t", "t"): dvt_t, ("t", "p"): dvt_p,
          ("p", "t"): dvp_t, ("p", "p"): dvp_p}
    v = {"t": vt, "p": vp}
    gcov = {("t", "t"): geom.g_tt, ("t", "p"): geom.g_tp,
            ("p", "t"): geom.g_tp, ("p", "p"): geom.g_pp}
    out = {}
    for al in ("t", "p"):
        for be in ("t", "p"):
            cov = np.zeros_like(vt)
            for ga in ("t", "p"):
                term = dv[(ga, be)].copy()
                for de in ("t", "p"):
                    term += geom.gamma[(ga, be, de)] * v[de]
                cov += gcov[(al, ga)] * term
            out[(al, be)] = cov
    return out, vt, vp


def surface_div(shape: SurfaceShape, vel: SurfaceVelocity) -> np.ndarray:
    """Div u = div_g v - w H pointwise on the geometry grid."""
    geom = shape.geometry
    vt, vp, dvt_t, _, _, dvp_p = velocity_chart(vel, geom)
    divv = geom.div_chart(vt, vp, dvt_t, dvp_p)
    w = geom.grid.synth(vel.w)
    return divv - w * geom.H


def rate_of_strain(shape: SurfaceShape, vel: SurfaceVelocity) -> RateOfStrain:
    """(D u)_ab = (v_{a;b} + v_{b;a})/2 - w k_ab."""
    geom = shape.geometry
    cov, _, _ = covariant_velocity_gradient(vel, geom)
    w = geom.grid.synth(vel.w)
    return RateOfStrain(
        d_tt=cov[("t", "t")] - w * geom.k_tt,
        d_tp=0.5 * (cov[("t", "p")] + cov[("p", "t")]) - w * geom.k_tp,
        d_pp=cov[("p", "p")] - w * geom.k_pp,
    )


# ---------------------------------------------------------------------------
# energy and stresses
# ---------------------------------------------------------------------------


def energy_ch(shape: SurfaceShape, params: MaterialParams) -> EnergyReport:
    """Bending energy, Gauss term, area, volume, isoperimetric ratio."""
    geom = shape.geometry
    area = geom.integrate(np.ones_like(geom.H))
    volume = geom.grid.integrate(geom.rho**3) / 3.0
    f_bend = 0.5 * params.kappa * geom.integrate((geom.H - params.c0) ** 2)
    f_gauss = params.kappa_g * geom.integrate(geom.K)
    sigma = 6.0 * np.sqrt(np.pi) * volume / area**1.5
    return EnergyReport(f_bend=f_bend, f_gauss=f_gauss, area=area,
                        volume=volume, sigma=sigma)


def grad_l2_F(shape: SurfaceShape, params: MaterialParams) -> np.ndarray:
    """L2 gradient of the bending energy as a pointwise normal-force field:
    kappa (Delta_g H + H (H^2/2 - 2K) + C0 (2K - H C0/2))."""
    geom = shape.geometry
    Hc = geom.grid.analyze(geom.H)
    lap_H = geom.laplacian_field(Hc)
    H, K, c0 = geom.H, geom.K, params.c0
    return params.kappa * (lap_H + H * (H**2 / 2.0 - 2.0 * K)
                           + c0 * (2.0 * K - H * c0 / 2.0))


def helfrich_stress(shape: SurfaceShape, params: MaterialParams) -> HybridStress:
    """Bending stress: tangential kappa((H-C0)^2/2 g^{ab} - (H-C0) k^{ab}),
    normal -kappa grad_g(H-C0)."""
    geom = shape.geometry
    Hc = geom.grid.analyze(geom.H)
    H_t = geom.grid.synth_dtheta(Hc)
    H_p = geom.grid.synth(sh.phi_derivative(Hc))
    dH = geom.H - params.c0
    kup_tt, kup_tp, kup_pp = _raise2(geom, geom.k_tt, geom.k_tp, geom.k_pp)
    k = params.kappa
    nt, np_ = geom.grad_chart(H_t, H_p)
    return HybridStress(
        t_tt=k * (0.5 * dH**2 * geom.ginv_tt - dH * kup_tt),
        t_tp=k * (0.5 * dH**2 * geom.ginv_tp - dH * kup_tp),
        t_pp=k * (0.5 * dH**2 * geom.ginv_pp - dH * kup_pp),
        n_t=-k * nt,
        n_p=-k * np_,
    )


def fluid_stress(shape: SurfaceShape, vel: SurfaceVelocity, q: ShCoeffs,
                 params: MaterialParams) -> HybridStress:
    """Boussinesq-Scriven stress -q g^{ab} + 2 mu (D u)^{ab} (tangential)."""
    geom = shape.geometry
    D = rate_of_strain(shape, vel)
    up_tt, up_tp, up_pp = _raise2(geom, D.d_tt, D.d_tp, D.d_pp)
    qf = geom.grid.synth(q)
    zero = np.zeros_like(qf)
    mu = params.mu
    return HybridStress(
        t_tt=-qf * geom.ginv_tt + 2 * mu * up_tt,
        t_tp=-qf * geom.ginv_tp + 2 * mu * up_tp,
        t_pp=-qf * geom.ginv_pp + 2 * mu * up_pp,
        n_t=zero, n_p=zero,
    )


def hybrid_div(shape: SurfaceShape, T: HybridStress) -> np.ndarray:
    """(Div T)^i = (div_g tT)^a X^i_a + tT^{ab} k_ab nu^i
    + (div_g nT) nu^i - nT^a k_a^b X^i_b, evaluated weakly (R^3-valued)."""
    return shape.geometry.weak_hybrid_div(T)


def _rotate_tangent(geom: GeometryCache, vt: np.ndarray, vp: np.ndarray):
    """Chart components of J v = nu x v (rotation by +90 deg in the plane)."""
    vec = vt * geom.x_t + vp * geom.x_p
    rot = np.cross(geom.nu, vec, axis=0)
    rt_cov = np.einsum("ijk,ijk->jk", rot, geom.x_t)
    rp_cov = np.einsum("ijk,ijk->jk", rot, geom.x_p)
    return geom.grad_chart(rt_cov, rp_cov)  # raising covariant components


def div_total_stress(shape: SurfaceShape, vel: SurfaceVelocity, q: ShCoeffs,
                     params: MaterialParams):
    """Termwise divergence of the total surface stress ^fT + ^hT.

    Tangential part: -grad_g q + mu (Delta_g v + grad_g(div_g v) + K v
    - 2 div_g(w k)); normal part: -q H + 2 mu (<grad v, k>_g - w (H^2 - 2K))
    - kappa (Delta_g H + H(H^2/2 - 2K) + C0 (2K - H C0/2)).  For surface-
    incompressible velocities div_g v = w H and the tangential part reduces
    to the grad_g(w H) form.  Returns (tangential R^3 field, normal field).
    """
    geom = shape.geometry
    g = geom.grid
    mu = params.mu

    cov, vt, vp = covariant_velocity_gradient(vel, geom)
    _, _, dvt_t, _, _, dvp_p = velocity_chart(vel, geom)
    divv = geom.div_chart(vt, vp, dvt_t, dvp_p)
    w = g.synth(vel.w)
    w_t = g.synth_dtheta(vel.w)
    w_p = g.synth(sh.phi_derivative(vel.w))

    # scalar curl of v (Christoffels cancel in the antisymmetric part)
    curl = (cov[("p", "t")] - cov[("t", "p")]) / geom.jac
    divv_c = g.analyze(divv)
    curl_c = g.analyze(curl)
    gd_t, gd_p = geom.grad_chart(g.synth_dtheta(divv_c),
                                 g.synth(sh.phi_derivative(divv_c)))
    gc_t, gc_p = geom.grad_chart(g.synth_dtheta(curl_c),
                                 g.synth(sh.phi_derivative(curl_c)))
    jc_t, jc_p = _rotate_tangent(geom, gc_t, gc_p)
    lap_v_t = gd_t + jc_t + geom.K * vt
    lap_v_p = gd_p + jc_p + geom.K * vp

    # div_g(w k) = k(grad w)^sharp + w grad_g H (Codazzi-Mainardi)
    kup_tt, kup_tp, kup_pp = _raise2(geom, geom.k_tt, geom.k_tp, geom.k_pp)
    # k^{ab} w_b with covariant w_b
    kg_t = kup_tt * w_t + kup_tp * w_p
    kg_p = kup_tp * w_t + kup_pp * w_p
    Hc = g.analyze(geom.H)
    H_t = g.synth_dtheta(Hc)
    H_p = g.synth(sh.phi_derivative(Hc))
    gH_t, gH_p = geom.grad_chart(H_t, H_p)
    divwk_t = kg_t + w * gH_t
    divwk_p = kg_p + w * gH_p

    qf, q_t, q_p = geom.scalar_derivs(q)
    gq_t, gq_p = geom.grad_chart(q_t, q_p)

    tan_t = -gq_t + mu * (lap_v_t + gd_t + geom.K * vt - 2 * divwk_t)
    tan_p = -gq_p + mu * (lap_v_p + gd_p + geom.K * vp - 2 * divwk_p)
    tangential = tan_t * geom.x_t + tan_p * geom.x_p

    # <grad v, k>_g = v_{a;b} k^{ab}
    pair = (cov[("t", "t")] * kup_tt + (cov[("t", "p")] + cov[("p", "t")]) * kup_tp
            + cov[("p", "p")] * kup_pp)
    normal = (-qf * geom.H + 2 * mu * (pair - w * (geom.H**2 - 2 * geom.K))
              - grad_l2_F(shape, params))
    return tangential, normal


def reynolds_numbers(params: MaterialParams, l_typ: float, t_typ: float):
    """Bulk and surface Reynolds numbers rho L^2 / (mu T)."""
    if l_typ < 0 or t_typ <= 0:
        raise InvalidParameter("length and time scales must be positive")
    r_b = params.rho_b * l_typ**2 / (params.mu_b * t_typ)
    r = params.rho * l_typ**2 / (params.mu * t_typ)
    return r_b, r


# ---------------------------------------------------------------------------
# convenience constructors for common velocity fields
# ---------------------------------------------------------------------------


def translation_velocity(shape: SurfaceShape, direction: np.ndarray) -> SurfaceVelocity:
    """Rigid translation u = e restricted to a round sphere.

    Exact (band-limited potentials) only for h = 0; callers needing rigid
    motions on deformed shapes should use the kinematic finite-difference
    route instead.
    """
    lmax = max(shape.lmax, 2)
    e = np.asarray(direction, dtype=float)
    a = shape.domain.a
    # w = e . nu -> l=1 harmonics; v = grad_g(e . X) with e.X = a (e.omega)
    w = sh.zeros(lmax)
    vals = w.values.copy()
    n1 = np.sqrt(4.0 * np.pi / 3.0)
    vals[sh.coeff_index(1, 1)] = e[0] * n1
    vals[sh.coeff_index(1, -1)] = e[1] * n1
    vals[sh.coeff_index(1, 0)] = e[2] * n1
    w = ShCoeffs(lmax, vals)
    # chart components v^a = ghat^{ab} d_b(e.omega) * ... on the sphere the
    # tangential part is grad_g(a e.omega) = (1/a) grad_1; potential per the
    # chart convention is Psi with v^a = ghat^{ab} Psi_b, Psi = e.omega
    psi = ShCoeffs(lmax, vals.copy(), "spheroidal-tangent")
    return SurfaceVelocity(w=w, v_sph=psi, v_tor=None)
