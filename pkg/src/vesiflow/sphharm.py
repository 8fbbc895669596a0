"""Real spherical-harmonic transforms and spectral operators on the unit sphere.

Basis convention (the single source of truth, read by every other module
and by the tests):

* Real orthonormal harmonics, Condon-Shortley free::

      Y[l, 0]    = Nbar_{l,0} P_l(cos th)
      Y[l, m>0]  = sqrt(2) Nbar_{l,m} P_l^m(cos th) cos(m ph)
      Y[l, m<0]  = sqrt(2) Nbar_{l,|m|} P_l^|m|(cos th) sin(|m| ph)

  where ``P_l^m`` is the Ferrers function *without* the (-1)^m phase and
  ``Nbar_{l,m} = sqrt((2l+1)(l-m)! / (4 pi (l+m)!))``, so that
  ``integral(Y[l,m] * Y[l',m'] dOmega) = delta_{ll'} delta_{mm'}``.
  A constant field c therefore has coefficient c*sqrt(4 pi) on (0, 0).

* Coefficients are packed in a flat float array with ``idx(l, m) = l*l + l + m``.

* Grids are Gauss-Legendre in colatitude times equispaced longitude,
  exact for products of harmonics up to degree 2*lmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np


class ShapeError(ValueError):
    """Sample or band-limit mismatch between coefficients and grid."""


class InvalidBandLimit(ValueError):
    """Band limit below the supported minimum."""


def coeff_index(l: int, m: int) -> int:
    """Flat index of the (l, m) entry, m in [-l, l]."""
    return l * l + l + m


def n_coeffs(lmax: int) -> int:
    return (lmax + 1) ** 2


def degrees(lmax: int) -> np.ndarray:
    """Degree l of every packed coefficient slot."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(lmax + 1)])
    return ls


def orders(lmax: int) -> np.ndarray:
    """Order m of every packed coefficient slot."""
    return np.concatenate([np.arange(-l, l + 1) for l in range(lmax + 1)])


@dataclass(frozen=True)
class ShCoeffs:
    """Packed real spherical-harmonic coefficients of a real field.

    kind is 'scalar' for plain scalars, 'spheroidal-tangent' /
    'toroidal-tangent' for tangential-field potentials (l >= 1 content only).
    """

    lmax: int
    values: np.ndarray
    kind: str = "scalar"

    def __post_init__(self):
        if self.values.shape != (n_coeffs(self.lmax),):
            raise ShapeError(
                f"coefficient array has shape {self.values.shape}, "
                f"expected ({n_coeffs(self.lmax)},)"
            )
        if self.kind not in ("scalar", "spheroidal-tangent", "toroidal-tangent"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind != "scalar" and abs(self.values[0]) > 0:
            raise ValueError("tangential potentials must have no l=0 content")

    def get(self, l: int, m: int) -> float:
        return float(self.values[coeff_index(l, m)])

    def set(self, l: int, m: int, value: float) -> "ShCoeffs":
        vals = self.values.copy()
        vals[coeff_index(l, m)] = value
        return replace(self, values=vals)

    def pad_to(self, lmax: int) -> "ShCoeffs":
        """Zero-pad (or error on truncation) to a larger band limit."""
        if lmax < self.lmax:
            raise ShapeError("pad_to cannot reduce the band limit")
        vals = np.zeros(n_coeffs(lmax))
        vals[: n_coeffs(self.lmax)] = self.values
        return ShCoeffs(lmax, vals, self.kind)

    def truncated(self, lmax: int) -> "ShCoeffs":
        if lmax >= self.lmax:
            return self.pad_to(lmax)
        return ShCoeffs(lmax, self.values[: n_coeffs(lmax)].copy(), self.kind)

    def __add__(self, other: "ShCoeffs") -> "ShCoeffs":
        if other.lmax != self.lmax:
            raise ShapeError("band limits differ")
        return replace(self, values=self.values + other.values)

    def __sub__(self, other: "ShCoeffs") -> "ShCoeffs":
        if other.lmax != self.lmax:
            raise ShapeError("band limits differ")
        return replace(self, values=self.values - other.values)

    def __mul__(self, scalar: float) -> "ShCoeffs":
        return replace(self, values=self.values * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        """L2(S^2) norm of the represented field (Parseval)."""
        return float(np.sqrt(np.sum(self.values**2)))


def zeros(lmax: int, kind: str = "scalar") -> ShCoeffs:
    return ShCoeffs(lmax, np.zeros(n_coeffs(lmax)), kind)


def delta(lmax: int, l: int, m: int, amplitude: float = 1.0,
          kind: str = "scalar") -> ShCoeffs:
    vals = np.zeros(n_coeffs(lmax))
    vals[coeff_index(l, m)] = amplitude
    return ShCoeffs(lmax, vals, kind)


def constant(lmax: int, value: float) -> ShCoeffs:
    """Coefficients of the constant field, (0,0) slot = value*sqrt(4 pi)."""
    vals = np.zeros(n_coeffs(lmax))
    vals[0] = value * np.sqrt(4.0 * np.pi)
    return ShCoeffs(lmax, vals)


def _legendre_tables(x: np.ndarray, lmax: int):
    """Normalized associated Legendre values and theta-derivatives.

    Returns lists P[m], D[m] of arrays with shape (n_theta, lmax+1-m) holding
    Nbar_{l,m} P_l^m(x) and its d/dtheta, l = m..lmax, without the
    Condon-Shortley phase.  Stable three-term recurrences; factorials never
    formed explicitly.
    """
    nt = x.size
    s = np.sqrt(1.0 - x * x)  # sin(theta) > 0 at interior nodes
    P = []
    # diagonal seeds
    pmm = np.full(nt, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(lmax + 1):
        cols = np.empty((nt, lmax + 1 - m))
        cols[:, 0] = pmm
        if m + 1 <= lmax:
            cols[:, 1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = a / np.sqrt((4.0 * (l - 1) ** 2 - 1.0) / ((l - 1) ** 2 - m * m))
            cols[:, l - m] = a * x * cols[:, l - 1 - m] - b * cols[:, l - 2 - m]
        P.append(cols)
        if m < lmax:
            pmm = np.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * pmm
    D = []
    for m in range(lmax + 1):
        cols = np.empty((nt, lmax + 1 - m))
        for l in range(m, lmax + 1):
            term = l * x * P[m][:, l - m]
            if l > m:
                c = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0))
                term = term - c * P[m][:, l - 1 - m]
            cols[:, l - m] = term / s
        D.append(cols)
    return P, D


class SphGrid:
    """Gauss-Legendre x equispaced-longitude grid with cached Legendre tables.

    n_theta >= lmax+1 and n_phi >= 2*lmax+1 so that quadrature of products of
    two band-limited fields is exact.
    """

    def __init__(self, lmax: int, n_theta: int | None = None,
                 n_phi: int | None = None):
        if lmax < 2:
            raise InvalidBandLimit(f"lmax must be >= 2, got {lmax}")
        self.lmax = lmax
        self.n_theta = n_theta if n_theta is not None else lmax + 1
        self.n_phi = n_phi if n_phi is not None else 2 * (lmax + 1)
        if self.n_theta < lmax + 1 or self.n_phi < 2 * lmax + 1:
            raise InvalidBandLimit("grid too small for the requested band limit")
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        order = np.argsort(-x)  # colatitude increasing from the north pole
        self.x = x[order]
        self.w_theta = w[order]
        self.theta = np.arccos(self.x)
        self.sin_theta = np.sqrt(1.0 - self.x**2)
        self.phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        self.dphi = 2.0 * np.pi / self.n_phi
        self._P, self._D = _legendre_tables(self.x, lmax)
        ms = np.arange(lmax + 1)
        self._cos = np.cos(np.outer(ms, self.phi))  # (m, n_phi)
        self._sin = np.sin(np.outer(ms, self.phi))

    # -- packed <-> per-m views ------------------------------------------

    def _split_cs(self, coeffs: ShCoeffs):
        """Per-m cosine/sine coefficient columns C[m][l-m], S[m][l-m]."""
        v = coeffs.values
        lmax = self.lmax
        C = []
        S = []
        for m in range(lmax + 1):
            ls = np.arange(m, lmax + 1)
            C.append(v[ls * ls + ls + m])
            if m > 0:
                S.append(v[ls * ls + ls - m])
            else:
                S.append(np.zeros_like(C[0]))
        return C, S

    def _synth_tables(self, coeffs: ShCoeffs, tables) -> np.ndarray:
        """Sum_{lm} c_lm * table_lm(theta) * trig(m phi) on the grid."""
        if coeffs.lmax > self.lmax:
            raise ShapeError("coefficient band limit exceeds the grid")
        c = coeffs.pad_to(self.lmax) if coeffs.lmax < self.lmax else coeffs
        C, S = self._split_cs(c)
        out = np.zeros((self.n_theta, self.n_phi))
        for m in range(self.lmax + 1):
            fac = np.sqrt(2.0) if m > 0 else 1.0
            gc = tables[m] @ (fac * C[m])  # (n_theta,)
            out += gc[:, None] * self._cos[m][None, :]
            if m > 0:
                gs = tables[m] @ (fac * S[m])
                out += gs[:, None] * self._sin[m][None, :]
        return out

    def synth(self, coeffs: ShCoeffs) -> np.ndarray:
        """Pointwise values of the expansion at the grid nodes."""
        return self._synth_tables(coeffs, self._P)

    def synth_dtheta(self, coeffs: ShCoeffs) -> np.ndarray:
        return self._synth_tables(coeffs, self._D)

    def synth_dphi(self, coeffs: ShCoeffs) -> np.ndarray:
        return self.synth(phi_derivative(coeffs))

    def synth_d2theta(self, coeffs: ShCoeffs) -> np.ndarray:
        """d^2/dtheta^2 via the associated Legendre ODE (needs P and D only)."""
        if coeffs.lmax > self.lmax:
            raise ShapeError("coefficient band limit exceeds the grid")
        c = coeffs.pad_to(self.lmax) if coeffs.lmax < self.lmax else coeffs
        C, S = self._split_cs(c)
        cot = self.x / self.sin_theta
        inv_s2 = 1.0 / self.sin_theta**2
        out = np.zeros((self.n_theta, self.n_phi))
        for m in range(self.lmax + 1):
            ls = np.arange(m, self.lmax + 1)
            ell = ls * (ls + 1.0)
            # d2P = -cot * dP - (l(l+1) - m^2/sin^2) * P
            tab = (-cot[:, None] * self._D[m]
                   - (ell[None, :] - (m * m) * inv_s2[:, None]) * self._P[m])
            fac = np.sqrt(2.0) if m > 0 else 1.0
            gc = tab @ (fac * C[m])
            out += gc[:, None] * self._cos[m][None, :]
            if m > 0:
                gs = tab @ (fac * S[m])
                out += gs[:, None] * self._sin[m][None, :]
        return out

    def analyze(self, f: np.ndarray) -> ShCoeffs:
        """Coefficients of the band-limited interpolant of grid samples."""
        if f.shape != (self.n_theta, self.n_phi):
            raise ShapeError(
                f"field shape {f.shape} does not match grid "
                f"({self.n_theta}, {self.n_phi})"
            )
        F = np.fft.rfft(f, axis=1)
        vals = np.zeros(n_coeffs(self.lmax))
        wq = self.w_theta  # Gauss weights in x = cos(theta)
        for m in range(self.lmax + 1):
            ls = np.arange(m, self.lmax + 1)
            if m == 0:
                cm = F[:, 0].real / self.n_phi
                proj = (self._P[0] * (wq * cm)[:, None]).sum(axis=0) * 2.0 * np.pi
                vals[ls * ls + ls] = proj
            else:
                cm = 2.0 * F[:, m].real / self.n_phi
                sm = -2.0 * F[:, m].imag / self.n_phi
                base = np.pi * np.sqrt(2.0)
                vals[ls * ls + ls + m] = base * (self._P[m] * (wq * cm)[:, None]).sum(axis=0)
                vals[ls * ls + ls - m] = base * (self._P[m] * (wq * sm)[:, None]).sum(axis=0)
        return ShCoeffs(self.lmax, vals)

    def analyze_gradient_pairing(self, a_theta: np.ndarray,
                                 a_phi: np.ndarray) -> ShCoeffs:
        """Coefficients d_lm = integral(a . grad_1 Y_lm dOmega).

        a is a tangent field in unit-sphere physical components
        (a_theta along e_theta, a_phi along e_phi); the contraction
        a . grad_1 Y = a_theta dY/dtheta + a_phi (1/sin) dY/dphi is an
        invariant scalar, so plain quadrature is spectrally accurate.
        """
        if a_theta.shape != (self.n_theta, self.n_phi):
            raise ShapeError("component shape does not match grid")
        Ft = np.fft.rfft(a_theta, axis=1)
        Fp = np.fft.rfft(a_phi, axis=1)
        vals = np.zeros(n_coeffs(self.lmax))
        wq = self.w_theta
        inv_s = 1.0 / self.sin_theta
        for m in range(self.lmax + 1):
            ls = np.arange(m, self.lmax + 1)
            if m == 0:
                cm = Ft[:, 0].real / self.n_phi
                vals[ls * ls + ls] = 2.0 * np.pi * (self._D[0] * (wq * cm)[:, None]).sum(axis=0)
            else:
                base = np.pi * np.sqrt(2.0)
                ct = 2.0 * Ft[:, m].real / self.n_phi
                st = -2.0 * Ft[:, m].imag / self.n_phi
                cp = 2.0 * Fp[:, m].real / self.n_phi
                sp = -2.0 * Fp[:, m].imag / self.n_phi
                # cos-harmonics: dY/dtheta ~ D cos(m phi); (1/s) dY/dphi ~ -m P/s sin(m phi)
                Ps = self._P[m] * inv_s[:, None]
                vals[ls * ls + ls + m] = base * (
                    (self._D[m] * (wq * ct)[:, None]).sum(axis=0)
                    - m * (Ps * (wq * sp)[:, None]).sum(axis=0)
                )
                # sin-harmonics: dY/dtheta ~ D sin(m phi); (1/s) dY/dphi ~ +m P/s cos(m phi)
                vals[ls * ls + ls - m] = base * (
                    (self._D[m] * (wq * st)[:, None]).sum(axis=0)
                    + m * (Ps * (wq * cp)[:, None]).sum(axis=0)
                )
        return ShCoeffs(self.lmax, vals)

    def quad_weights(self) -> np.ndarray:
        """Quadrature weights w_jk with sum = 4 pi (solid-angle measure)."""
        return np.repeat(self.w_theta[:, None], self.n_phi, axis=1) * self.dphi

    def integrate(self, f: np.ndarray) -> float:
        """Solid-angle integral of grid samples."""
        return float(np.sum(f * self.w_theta[:, None]) * self.dphi)


@lru_cache(maxsize=32)
def build_grid(lmax: int) -> SphGrid:
    """Default grid for band limit lmax (cached; grids are immutable)."""
    return SphGrid(lmax)


def product_grid(lmax: int) -> SphGrid:
    """Dealiased grid for pointwise products.

    At least the 3/2 rule; small band limits get extra headroom because the
    curvature expressions are rational, not polynomial, in the height field.
    """
    return build_grid(max((3 * lmax + 1) // 2 + 1, min(2 * lmax, lmax + 16)))


def analyze(f: np.ndarray, grid: SphGrid) -> ShCoeffs:
    return grid.analyze(f)


def synthesize(coeffs: ShCoeffs, grid: SphGrid) -> np.ndarray:
    return grid.synth(coeffs)


def phi_derivative(coeffs: ShCoeffs) -> ShCoeffs:
    """d/dphi in coefficient space: rotates cos- and sin-harmonics."""
    lmax = coeffs.lmax
    vals = np.zeros_like(coeffs.values)
    for l in range(lmax + 1):
        for m in range(1, l + 1):
            ip = coeff_index(l, m)
            im = coeff_index(l, -m)
            vals[ip] = m * coeffs.values[im]
            vals[im] = -m * coeffs.values[ip]
    return ShCoeffs(lmax, vals)


def laplace_beltrami_unit(coeffs: ShCoeffs) -> ShCoeffs:
    """Unit-sphere Laplace-Beltrami: multiplies (l, m) by -l(l+1)."""
    if coeffs.kind != "scalar":
        raise ValueError("laplace_beltrami_unit acts on scalar coefficients")
    ls = degrees(coeffs.lmax)
    return ShCoeffs(coeffs.lmax, coeffs.values * (-ls * (ls + 1.0)), coeffs.kind)


def integrate(f: np.ndarray, weight: np.ndarray, grid: SphGrid) -> float:
    """Quadrature of f*weight over the sphere (weight = area density)."""
    if f.shape != weight.shape:
        raise ShapeError("field and weight shapes differ")
    return grid.integrate(f * weight)


def random_band_limited(lmax: int, rng: np.random.Generator,
                        decay: float = 0.5, l_min: int = 0,
                        kind: str = "scalar") -> ShCoeffs:
    """Random coefficients with geometrically decaying per-degree amplitude."""
    vals = np.zeros(n_coeffs(lmax))
    for l in range(max(l_min, 0), lmax + 1):
        amp = decay**l
        sl = slice(coeff_index(l, -l), coeff_index(l, l) + 1)
        vals[sl] = amp * rng.standard_normal(2 * l + 1)
    if kind != "scalar":
        vals[0] = 0.0
    return ShCoeffs(lmax, vals, kind)
