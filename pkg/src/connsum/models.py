"""Built-in constant-scalar-curvature manifold models.

Each model supplies what a gluing construction needs at its attachment
point: the dimension, the constant background curvature nu, a normalized
conformally flat chart factor (value 1, vanishing gradient at the
center) with closed-form radial derivatives, the usable chart radius,
and the total volume.

Models backed by an actual compact discretization (torus, round sphere,
sphere product, hyperbolic ball) also know how to mesh themselves; the
synthetic asymptotically flat model stands in for the stereographic
projection of a positive-curvature manifold, closed off at the waist of
its own neck, so that it is exactly scalar flat with prescribed mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .constants import make_constants
from .conformal import sphere_area
from .errors import InvalidParameterError
from .factors import (CylinderChart, FlatFactor, NeckFactor, RadialFactor,
                      SphereGermFactor, SyntheticAFFactor)


class ManifoldModel:
    """Base for closed (or Neumann-bounded) background manifolds."""

    name = "abstract"
    n: int
    nu: float

    def chart_factor(self) -> RadialFactor:
        """Radial chart germ at the gluing point."""
        raise NotImplementedError

    def chart_radius(self) -> float:
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FlatTorusModel(ManifoldModel):
    """Flat torus of side `side`; scalar curvature 0, chart factor 1."""

    side: float
    n: int = 3
    name = "flat_torus"

    @property
    def nu(self) -> float:
        return 0.0

    def chart_factor(self) -> RadialFactor:
        return FlatFactor()

    def chart_radius(self) -> float:
        return 0.45 * self.side

    def volume(self) -> float:
        return self.side ** self.n

    def describe(self):
        return {"model": "flat_torus", "n": self.n, "side": self.side}


@dataclass(frozen=True)
class RoundSphereModel(ManifoldModel):
    """Round n-sphere rescaled to constant scalar curvature `scalar`."""

    n: int = 3
    scalar: float = 1.0
    name = "round_sphere"

    @property
    def nu(self) -> float:
        return float(np.sign(self.scalar))

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.n * (self.n - 1) / self.scalar))

    def chart_factor(self) -> RadialFactor:
        return SphereGermFactor.with_curvature(self.n, self.scalar)

    def chart_radius(self) -> float:
        # stereographic coordinate radius; the chart extends arbitrarily
        # far, but gluing stays within one radius of curvature
        return self.radius

    def volume(self) -> float:
        return sphere_area(self.n + 1) * self.radius ** self.n

    def describe(self):
        return {"model": "round_sphere", "n": self.n, "scalar": self.scalar}


@dataclass(frozen=True)
class ProductSphereModel(ManifoldModel):
    """S^2(radius) x S^1(circumference), n = 3.

    Scalar curvature 2/radius^2 (radius sqrt(2) gives curvature 1).  The
    exact chart factor is the Mobius-normalized cylinder chart; the
    radial germ used for annulus quadrature is the sphere germ with the
    same curvature (the traceless quadratic part integrates to zero over
    spheres and is dropped there, but the exact factor is used for mesh
    metric weights).
    """

    radius: float = float(np.sqrt(2.0))
    circumference: float = 2.0 * np.pi
    n: int = 3
    name = "product_sphere"

    @property
    def nu(self) -> float:
        return 1.0

    @property
    def scalar(self) -> float:
        return 2.0 / self.radius ** 2

    def cylinder_chart(self) -> CylinderChart:
        return CylinderChart(self.radius, self.circumference)

    def chart_factor(self) -> RadialFactor:
        return SphereGermFactor.with_curvature(self.n, self.scalar)

    def chart_radius(self) -> float:
        return self.cylinder_chart().chart_injectivity_radius()

    def volume(self) -> float:
        return sphere_area(3) * self.radius ** 2 * self.circumference

    def describe(self):
        return {"model": "product_sphere", "n": self.n,
                "radius": self.radius, "circumference": self.circumference}


@dataclass(frozen=True)
class HyperbolicBallModel(ManifoldModel):
    """Ball in hyperbolic space (scalar curvature -1) with Neumann
    boundary at coordinate radius `ball_radius`.

    Closed conformally flat manifolds of scalar curvature -1 have no
    structured discretization here; a Neumann ball is an honest compact
    constant-curvature background for which every hypothesis used by the
    solvers (Sobolev embedding, nonnegative spectrum, maximum principle)
    holds verbatim.
    """

    ball_radius: float = 2.0
    n: int = 3
    name = "hyperbolic_ball"

    def __post_init__(self):
        r_max = 2.0 * np.sqrt(self.n * (self.n - 1))
        if not 0.0 < self.ball_radius < 0.9 * r_max:
            raise InvalidParameterError(
                f"ball radius must lie in (0, {0.9 * r_max:.3f})")

    @property
    def nu(self) -> float:
        return -1.0

    def chart_factor(self) -> RadialFactor:
        return SphereGermFactor.with_curvature(self.n, -1.0)

    def chart_radius(self) -> float:
        return self.ball_radius

    def volume(self) -> float:
        c = make_constants(self.n)
        fac = self.chart_factor()
        w = sphere_area(self.n)
        val, _ = quad(lambda r: fac.value(r) ** c.p * r ** (self.n - 1),
                      0.0, self.ball_radius, epsabs=1e-13, epsrel=1e-13)
        return w * val

    def describe(self):
        return {"model": "hyperbolic_ball", "n": self.n,
                "ball_radius": self.ball_radius}


@dataclass(frozen=True)
class SyntheticAFModel:
    """Asymptotically flat graft end 1 + mu r^(2-n) (+ c r^(1-n)).

    With c = 0 this is exactly scalar flat and closes up at the waist
    radius mu^(1/(n-2)) of its own neck (reflection symmetry; Neumann
    waist in discretizations).  c != 0 is admitted for mass-fit work but
    rejected by family builds, where it would contaminate curvature
    rates with a non-scalar-flat tail.
    """

    mu: float = 1.0
    c: float = 0.0
    n: int = 3
    name = "synthetic_af"
    nu: float = 0.0   # scalar-flat end

    def __post_init__(self):
        if self.mu == 0.0:
            raise InvalidParameterError(
                "synthetic graft end needs nonzero mass")

    def af_factor(self) -> RadialFactor:
        if self.c == 0.0:
            return NeckFactor(self.n, self.mu)
        return SyntheticAFFactor(self.n, self.mu, self.c)

    @property
    def waist(self) -> float:
        return abs(self.mu) ** (1.0 / (self.n - 2))

    @property
    def inversion_scale(self) -> float:
        """sigma with u -> sigma u/|u|^2 an isometry of the end (only the
        pure-neck case is exactly involutive)."""
        return abs(self.mu) ** (2.0 / (self.n - 2))

    def interior_volume(self, outer_radius: float) -> float:
        """Volume of the capped end between the waist and outer_radius,
        in its own coordinates."""
        cst = make_constants(self.n)
        fac = self.af_factor()
        w = sphere_area(self.n)
        val, _ = quad(lambda r: fac.value(r) ** cst.p * r ** (self.n - 1),
                      self.waist, outer_radius, epsabs=1e-13, epsrel=1e-13,
                      limit=200)
        return w * val

    def describe(self):
        return {"model": "synthetic_af", "n": self.n, "mu": self.mu,
                "c": self.c}


@dataclass(frozen=True)
class QuadrupoleGermBody(ManifoldModel):
    """Scalar-flat body whose chart germ carries a traceless quadratic
    term: psi'(v) = 1 + eta r^2 P2(cos theta).

    The quadratic form is harmonic, so the germ is exactly scalar flat;
    its sphere average vanishes, which is what keeps curvature-integral
    identities clean, while its presence makes the L^q curvature error
    rates sharp (a flat torus, with psi' identically 1, is the
    degenerate case whose error field decays faster than generic).
    Quadrature-level model only; `vol` is declared metadata.
    """

    eta: float = 0.5
    vol: float = 8.0
    n: int = 3
    name = "quadrupole_germ"

    def __post_init__(self):
        if self.n != 3:
            raise InvalidParameterError("quadrupole germ implemented for n=3")
        if abs(self.eta) >= 1.0:
            raise InvalidParameterError("quadrupole amplitude must be < 1")

    @property
    def nu(self) -> float:
        return 0.0

    def chart_factor(self) -> RadialFactor:
        return FlatFactor()

    @property
    def quadrupole_eta(self) -> float:
        return self.eta

    def chart_radius(self) -> float:
        # keep psi' = 1 + eta r^2 P2 well away from zero
        return min(0.8, 0.6 / np.sqrt(abs(self.eta)) if self.eta else 0.8)

    def volume(self) -> float:
        return self.vol

    def describe(self):
        return {"model": "quadrupole_germ", "n": self.n, "eta": self.eta,
                "vol": self.vol}


def model_from_descriptor(d: dict):
    kind = d.get("model")
    if kind == "flat_torus":
        return FlatTorusModel(side=float(d["side"]), n=int(d.get("n", 3)))
    if kind == "round_sphere":
        return RoundSphereModel(n=int(d.get("n", 3)),
                                scalar=float(d.get("scalar", 1.0)))
    if kind == "product_sphere":
        return ProductSphereModel(
            radius=float(d.get("radius", np.sqrt(2.0))),
            circumference=float(d.get("circumference", 2.0 * np.pi)),
            n=int(d.get("n", 3)))
    if kind == "hyperbolic_ball":
        return HyperbolicBallModel(ball_radius=float(d.get("ball_radius", 2.0)),
                                   n=int(d.get("n", 3)))
    if kind == "synthetic_af":
        return SyntheticAFModel(mu=float(d.get("mu", 1.0)),
                                c=float(d.get("c", 0.0)),
                                n=int(d.get("n", 3)))
    if kind == "quadrupole_germ":
        return QuadrupoleGermBody(eta=float(d.get("eta", 0.5)),
                                  vol=float(d.get("vol", 8.0)),
                                  n=int(d.get("n", 3)))
    raise InvalidParameterError(f"unknown model descriptor {d!r}")
