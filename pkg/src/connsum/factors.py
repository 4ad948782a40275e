"""Model conformal factors on conformally flat charts.

A chart carries a metric psi^(p-2) h with h the standard flat metric;
every built-in factor knows its value and first two radial derivatives
in closed form, so curvature computations on annuli are limited by
quadrature accuracy rather than by finite-difference stencils.

Radial catalogue (r = |v|):
  * flat            psi = 1                        scalar curvature 0
  * sphere germ     psi = (1 + kappa r^2/4)^(-(n-2)/2)
                    scalar curvature n(n-1)*kappa (kappa < 0: hyperbolic)
  * neck            psi = 1 + mu r^(2-n)           scalar curvature 0
  * synthetic AF    psi = 1 + mu r^(2-n) + c r^(1-n)
  * pole + const    psi = c r^(2-n) + h0           scalar curvature 0

plus argument/value rescalings and the Kelvin transform, which is how
factors move between a chart and the inverted coordinates of an
asymptotically flat end.

The one non-radial factor is the exact normalized chart of the product
S^(n-1)(R) x S^1: the cylinder is conformal to flat space minus the
origin, and a Mobius recentering produces a chart factor with value 1
and vanishing gradient at the base point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveFactorError


class RadialFactor:
    """Base: positive radial conformal factor with two derivatives."""

    kind = "abstract"

    def value(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def check_positive(self, r):
        v = np.asarray(self.value(r))
        if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
            raise NonPositiveFactorError(
                f"{self.kind} factor not strictly positive on sample radii")

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FlatFactor(RadialFactor):
    kind = "flat"

    def value(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def d2(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def describe(self):
        return {"kind": "flat"}


@dataclass(frozen=True)
class SphereGermFactor(RadialFactor):
    """(1 + kappa r^2/4)^(-(n-2)/2): round-sphere (kappa>0) or hyperbolic
    (kappa<0) chart factor, scalar curvature exactly n(n-1)kappa."""

    n: int
    kappa: float
    kind = "sphere_germ"

    @staticmethod
    def with_curvature(n: int, scalar_curvature: float) -> "SphereGermFactor":
        return SphereGermFactor(n=n, kappa=scalar_curvature / (n * (n - 1)))

    @property
    def scalar_curvature(self) -> float:
        return self.n * (self.n - 1) * self.kappa

    def _u(self, r):
        return 1.0 + self.kappa * np.asarray(r, dtype=float) ** 2 / 4.0

    def value(self, r):
        e = -(self.n - 2) / 2.0
        return self._u(r) ** e

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        e = -(self.n - 2) / 2.0
        return e * self._u(r) ** (e - 1.0) * (self.kappa * r / 2.0)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        e = -(self.n - 2) / 2.0
        u = self._u(r)
        return (e * (e - 1.0) * u ** (e - 2.0) * (self.kappa * r / 2.0) ** 2
                + e * u ** (e - 1.0) * (self.kappa / 2.0))

    def describe(self):
        return {"kind": "sphere_germ", "n": self.n, "kappa": self.kappa}


@dataclass(frozen=True)
class NeckFactor(RadialFactor):
    """1 + mu r^(2-n): scalar-flat, asymptotically flat at both ends,
    invariant under r -> mu^(2/(n-2))/r combined with the Kelvin law."""

    n: int
    mu: float = 1.0
    kind = "neck"

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 + self.mu * r ** (2 - self.n)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return self.mu * (2 - self.n) * r ** (1 - self.n)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return self.mu * (2 - self.n) * (1 - self.n) * r ** (-self.n)

    @property
    def waist_radius(self) -> float:
        return self.mu ** (1.0 / (self.n - 2))

    def describe(self):
        return {"kind": "neck", "n": self.n, "mu": self.mu}


@dataclass(frozen=True)
class SyntheticAFFactor(RadialFactor):
    """1 + mu r^(2-n) + c r^(1-n): the two-term asymptotic shape of a
    stereographic end with mass mu and first correction c."""

    n: int
    mu: float
    c: float = 0.0
    kind = "synthetic_af"

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 + self.mu * r ** (2 - self.n) + self.c * r ** (1 - self.n)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return (self.mu * (2 - self.n) * r ** (1 - self.n)
                + self.c * (1 - self.n) * r ** (-self.n))

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return (self.mu * (2 - self.n) * (1 - self.n) * r ** (-self.n)
                + self.c * (1 - self.n) * (-self.n) * r ** (-self.n - 1))

    def describe(self):
        return {"kind": "synthetic_af", "n": self.n, "mu": self.mu,
                "c": self.c}


@dataclass(frozen=True)
class PolePlusConstantFactor(RadialFactor):
    """c_pole r^(2-n) + h0: local model of a Green-function factor."""

    n: int
    c_pole: float
    h0: float
    kind = "pole_plus_const"

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return self.c_pole * r ** (2 - self.n) + self.h0

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return self.c_pole * (2 - self.n) * r ** (1 - self.n)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return self.c_pole * (2 - self.n) * (1 - self.n) * r ** (-self.n)

    def describe(self):
        return {"kind": "pole_plus_const", "n": self.n,
                "c_pole": self.c_pole, "h0": self.h0}


@dataclass(frozen=True)
class RescaledArgument(RadialFactor):
    """base(r / scale): a factor seen through a pure coordinate scaling."""

    base: RadialFactor
    scale: float
    kind = "rescaled"

    def value(self, r):
        return self.base.value(np.asarray(r, dtype=float) / self.scale)

    def d1(self, r):
        return self.base.d1(np.asarray(r, dtype=float) / self.scale) / self.scale

    def d2(self, r):
        return self.base.d2(np.asarray(r, dtype=float) / self.scale) / self.scale**2

    def describe(self):
        return {"kind": "rescaled", "scale": self.scale,
                "base": self.base.describe()}


@dataclass(frozen=True)
class ScaledValue(RadialFactor):
    """c * base(r): a homothety folded into the factor."""

    base: RadialFactor
    c: float
    kind = "scaled_value"

    def value(self, r):
        return self.c * self.base.value(r)

    def d1(self, r):
        return self.c * self.base.d1(r)

    def d2(self, r):
        return self.c * self.base.d2(r)

    def describe(self):
        return {"kind": "scaled_value", "c": self.c,
                "base": self.base.describe()}


@dataclass(frozen=True)
class KelvinTransformed(RadialFactor):
    """The factor of the same metric in inverted coordinates
    u = sigma w/|w|^2: xi(u) = base(sigma/u) * (sigma/u^2)^((n-2)/2)."""

    base: RadialFactor
    n: int
    sigma: float = 1.0
    kind = "kelvin"

    def _parts(self, u):
        u = np.asarray(u, dtype=float)
        w = self.sigma / u
        j = (self.sigma / u**2) ** ((self.n - 2) / 2.0)
        return u, w, j

    def value(self, u):
        u, w, j = self._parts(u)
        return self.base.value(w) * j

    def d1(self, u):
        # d/du [ base(sigma/u) * (sigma/u^2)^m ],  m = (n-2)/2
        m = (self.n - 2) / 2.0
        u, w, j = self._parts(u)
        dw = -self.sigma / u**2
        dj = j * (-2.0 * m / u)
        return self.base.d1(w) * dw * j + self.base.value(w) * dj

    def d2(self, u):
        m = (self.n - 2) / 2.0
        u, w, j = self._parts(u)
        dw = -self.sigma / u**2
        d2w = 2.0 * self.sigma / u**3
        dj = j * (-2.0 * m / u)
        d2j = j * (2.0 * m * (2.0 * m + 1.0) / u**2)
        b, b1, b2 = self.base.value(w), self.base.d1(w), self.base.d2(w)
        return (b2 * dw**2 * j + b1 * d2w * j + 2.0 * b1 * dw * dj + b * d2j)

    def describe(self):
        return {"kind": "kelvin", "n": self.n, "sigma": self.sigma,
                "base": self.base.describe()}


# ---------------------------------------------------------------------------
# Exact product-cylinder chart (non-radial, axisymmetric)
# ---------------------------------------------------------------------------

def _special_conformal(w, c):
    """K_c(w) = (w + c|w|^2) / (1 + 2 c.w + |c|^2|w|^2) and its conformal
    scale J = 1/denominator.  w: (..., 3) array, c: (3,) vector."""
    w = np.asarray(w, dtype=float)
    w2 = np.sum(w * w, axis=-1)
    cw = np.tensordot(w, c, axes=([-1], [0]))
    c2 = float(np.dot(c, c))
    denom = 1.0 + 2.0 * cw + c2 * w2
    out = (w + np.multiply.outer(w2, c)) / denom[..., None]
    return out, 1.0 / denom


@dataclass(frozen=True)
class CylinderChart:
    """Normalized conformally flat chart of S^(n-1)(R) x S^1(circ) at a
    base point, for n = 3.

    The cylinder develops onto R^3 minus the origin with factor
    (R/|v|)^(1/2) and deck transformation v -> exp(circ/R) v.  The chart
    map w -> F(w) = v0 + K_c(w)/R with c = -v0/(2R) gives factor

        psi(w) = (|F(w)| D(w))^(-1/2),   D = K_c denominator,

    which satisfies psi(0) = 1, d psi(0) = 0.
    """

    radius: float
    circumference: float
    n: int = 3

    def __post_init__(self):
        if self.n != 3:
            raise NotImplementedError("cylinder chart implemented for n = 3")

    @property
    def axis(self):
        return np.array([0.0, 0.0, 1.0])

    @property
    def deck_ratio(self) -> float:
        return float(np.exp(self.circumference / self.radius))

    @property
    def c_vector(self):
        return -self.axis / (2.0 * self.radius)

    def forward(self, w):
        """Chart point w (..., 3) -> development point v (..., 3)."""
        k, _ = _special_conformal(w, self.c_vector)
        return self.axis + k / self.radius

    def inverse(self, v):
        """Development point v -> chart point w."""
        k, _ = _special_conformal((np.asarray(v, dtype=float) - self.axis)
                                  * self.radius, -self.c_vector)
        return k

    def value(self, w):
        """Chart factor psi(w) for w of shape (..., 3)."""
        _, j = _special_conformal(w, self.c_vector)
        f = self.forward(w)
        fn = np.sqrt(np.sum(f * f, axis=-1))
        return (fn / j) ** (-0.5)

    def value_axisym(self, rho, z):
        """psi at (rho, 0, z); the chart is rotationally symmetric."""
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        w = np.stack([rho, np.zeros_like(rho), z], axis=-1)
        return self.value(w)

    def radial_average_germ(self) -> SphereGermFactor:
        """Radial model with the same trace part: the sphere germ whose
        scalar curvature matches the cylinder's n(n-1)/R^2... the product
        S^2(R) x S^1 has scalar curvature 2/R^2."""
        s = 2.0 / self.radius**2
        return SphereGermFactor.with_curvature(self.n, s)

    def chart_injectivity_radius(self) -> float:
        """Safe chart radius: stay clear of the Mobius pole and of the
        deck-translated copies of the development origin."""
        pole = 2.0 * self.radius
        lam = self.deck_ratio
        # |F(w)| must stay inside (lam^-1/2, lam^1/2); conservative bound
        # via |F - v0| <= (|w|/R) / (1 - |w|/(2R)).
        target = min(np.sqrt(lam) - 1.0, 1.0 - 1.0 / np.sqrt(lam)) * 0.9
        r = target * self.radius / (1.0 + target / 2.0)
        return min(0.45 * pole, r)

    def describe(self):
        return {"kind": "cylinder_chart", "n": self.n, "radius": self.radius,
                "circumference": self.circumference}
