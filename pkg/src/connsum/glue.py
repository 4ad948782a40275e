"""Glued conformal families on connected sums, and their curvature error.

A family member g_t is assembled from two constant-curvature bodies (or
one body plus an asymptotically flat graft end) joined across an annulus
in a shared conformally flat chart.  On the annulus the conformal factor
interpolates between the body chart germ psi' and the incoming end
factor xi via a smooth radial partition of unity:

    psi_t(v) = beta1(v) psi'(v) + beta2(v) xi_loc(v).

Four one-point families are built here:

  PosGraft   body of curvature nu = +-1, graft end shrunk by t^12,
             transition annulus t^2 < |v| < t
  NeckJoin   two bodies of equal curvature nu = +-1 joined by a
             scalar-flat neck (metric t^12 * neck), same annulus radii
  ZeroGraft  scalar-flat body, graft end shrunk by t^2, transition
             annulus t^((n-2)/n) < |v| < t^(2k/(n+2))
  ZeroNeck   two scalar-flat bodies joined by a neck (metric t^2 * neck),
             same annulus radii, volumes balanced

plus HatNegZero, which only builds the rescaled-Green conformal factor
for gluing a scalar-flat body into a curvature -1 body.

The curvature error field eps_t is the deviation of the scalar curvature
of g_t from the target constant.   For the +-1 families eps_t is the
honest deficit nu - S(g_t).  For the zero families the error field is
normalized by the constant a (eps_t = -S(g_t)/a): every downstream rate,
the annulus integral identity (n-2) omega_{n-1} mu t^(n-2), and the
small negative target constant of the projected solver follow that
normalization, while the true curvature remains available as
`true_deficit` for cross-checks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .constants import ConformalConstants, make_constants
from .conformal import sphere_area
from .cutoff import CutoffProfile, default_profile
from .errors import (InvalidParameterError, NonPositiveFactorError,
                     QuadratureError, VolumeMismatchWarning)
from .factors import RadialFactor, RescaledArgument
from .models import (FlatTorusModel, ManifoldModel, ProductSphereModel,
                     SyntheticAFModel, model_from_descriptor)

FAMILY_KINDS = ("PosGraft", "NeckJoin", "ZeroGraft", "ZeroNeck", "HatNegZero")
GRAFT_FAMILIES = ("PosGraft", "ZeroGraft")
NECK_FAMILIES = ("NeckJoin", "ZeroNeck")
ZERO_FAMILIES = ("ZeroGraft", "ZeroNeck")


def admissible_k_interval(n: int):
    """Open interval of transition exponents for the zero families."""
    lo = (n - 2) * (n + 2) / (2.0 * (n + 1))
    hi = (n - 2) * (n + 2) / (2.0 * n)
    return lo, hi


def default_k(n: int) -> float:
    lo, hi = admissible_k_interval(n)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class GlueParams:
    """Parameters of one glued family member."""

    family: str
    t: float
    delta: float = 0.45
    nu: float = 0.0
    k: float | None = None
    mu: float = 1.0
    n: int = 3

    def __post_init__(self):
        if self.family not in FAMILY_KINDS:
            raise InvalidParameterError(f"unknown family {self.family!r}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameterError("delta must lie in (0, 1)")
        if not 0.0 < self.t < self.delta:
            raise InvalidParameterError(
                f"need 0 < t < delta, got t={self.t}, delta={self.delta}")
        if self.family in ZERO_FAMILIES:
            if self.nu != 0.0:
                raise InvalidParameterError("zero families have nu = 0")
            k = self.k if self.k is not None else default_k(self.n)
            lo, hi = admissible_k_interval(self.n)
            if not lo < k < hi:
                raise InvalidParameterError(
                    f"k={k} outside admissible interval ({lo}, {hi})")
            object.__setattr__(self, "k", float(k))
        elif self.family in ("PosGraft", "NeckJoin"):
            if self.nu not in (-1.0, 1.0):
                raise InvalidParameterError(
                    f"{self.family} requires nu = +-1, got {self.nu}")
        if self.family == "HatNegZero" and self.nu != -1.0:
            raise InvalidParameterError("HatNegZero targets nu = -1")

    @property
    def constants(self) -> ConformalConstants:
        return make_constants(self.n)

    def annulus_radii(self):
        """(r_in, r_out) of the transition annulus in body chart coords."""
        t, n = self.t, self.n
        if self.family in ZERO_FAMILIES:
            r_in = t ** ((n - 2) / n)
            r_out = t ** (2.0 * self.k / (n + 2))
        else:
            r_in, r_out = t * t, t
        if not r_in < r_out:
            raise InvalidParameterError("annulus radii out of order")
        return r_in, r_out

    @property
    def graft_argument_scale(self) -> float:
        """lambda with xi_loc(v) = xi(v/lambda)."""
        return self.t ** 6 if self.family in ("PosGraft", "NeckJoin") \
            else self.t

    @property
    def homothety_scale(self) -> float:
        """Metric scale applied to the grafted/neck component."""
        return self.t ** 12 if self.family in ("PosGraft", "NeckJoin") \
            else self.t ** 2

    @property
    def alpha(self) -> float:
        """Subleading exponent of the annulus curvature integral."""
        n = self.n
        k = self.k if self.k is not None else default_k(n)
        return min(2.0 / n, 2.0 * k * (n + 1) / (n + 2) - (n - 2))

    def describe(self) -> dict:
        return {"family": self.family, "t": self.t, "delta": self.delta,
                "nu": self.nu, "k": self.k, "mu": self.mu, "n": self.n}


# ---------------------------------------------------------------------------
# Transition profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionProfile:
    """beta1 radial profile: 1 at r_out, 0 at r_in, C^2 quintic in
    log-radius; beta2 = 1 - beta1."""

    cutoff: CutoffProfile
    r_in: float
    r_out: float

    def __post_init__(self):
        if not 0.0 < self.r_in < self.r_out:
            raise InvalidParameterError("transition radii out of order")

    def _x(self, r):
        r = np.asarray(r, dtype=float)
        span = np.log(self.r_in) - np.log(self.r_out)
        return self.cutoff.lo + (self.cutoff.hi - self.cutoff.lo) * \
            (np.log(r) - np.log(self.r_out)) / span

    def _dx(self, r):
        r = np.asarray(r, dtype=float)
        span = np.log(self.r_in) - np.log(self.r_out)
        return (self.cutoff.hi - self.cutoff.lo) / (r * span)

    def beta1(self, r):
        return self.cutoff.value(self._x(r))

    def beta2(self, r):
        return 1.0 - self.beta1(r)

    def beta1_d1(self, r):
        return self.cutoff.d1(self._x(r)) * self._dx(r)

    def beta1_d2(self, r):
        r = np.asarray(r, dtype=float)
        dx = self._dx(r)
        return self.cutoff.d2(self._x(r)) * dx * dx \
            + self.cutoff.d1(self._x(r)) * (-dx / r)

    def gradient_scale(self, r):
        """|v| |grad beta1| at radius r; bounded by C/|log window|."""
        r = np.asarray(r, dtype=float)
        return np.abs(r * self.beta1_d1(r))


def beta_fields(sigma: CutoffProfile, t: float, radii) -> TransitionProfile:
    """Partition-of-unity profile across [r_in, r_out] for parameter t.

    For the +-1 families (r_in, r_out) = (t^2, t) this reduces to
    sigma(log r / log t).
    """
    r_in, r_out = radii
    if not 0.0 < r_in < r_out < 1.0:
        raise InvalidParameterError("radii must satisfy 0 < r_in < r_out < 1")
    if not 0.0 < t < 1.0:
        raise InvalidParameterError("t must lie in (0, 1)")
    return TransitionProfile(sigma, r_in, r_out)


# ---------------------------------------------------------------------------
# Family complex
# ---------------------------------------------------------------------------

@dataclass
class GluingSide:
    """One gluing annulus: a body chart meeting an incoming end."""

    label: str
    model: object                 # body manifold model
    psi_prime: RadialFactor       # normalized body chart germ (radial part)
    xi_local: RadialFactor        # incoming end factor in body chart coords
    transition: TransitionProfile
    r_in: float
    r_out: float
    waist_w: float                # inner end of this side's chart column
    exact_chart: object = None    # non-radial chart (sphere products)
    quad_eta: float = 0.0         # traceless germ term eta r^2 P2(cos th)

    def psi_t(self, r):
        r = np.asarray(r, dtype=float)
        b1 = self.transition.beta1(r)
        return b1 * self.psi_prime.value(r) \
            + (1.0 - b1) * self.xi_local.value(r)

    def psi_t_d1(self, r):
        r = np.asarray(r, dtype=float)
        b1 = self.transition.beta1(r)
        db = self.transition.beta1_d1(r)
        return (db * (self.psi_prime.value(r) - self.xi_local.value(r))
                + b1 * self.psi_prime.d1(r)
                + (1.0 - b1) * self.xi_local.d1(r))

    def psi_t_d2(self, r):
        r = np.asarray(r, dtype=float)
        b1 = self.transition.beta1(r)
        db = self.transition.beta1_d1(r)
        d2b = self.transition.beta1_d2(r)
        dpsi = self.psi_prime.d1(r) - self.xi_local.d1(r)
        return (d2b * (self.psi_prime.value(r) - self.xi_local.value(r))
                + 2.0 * db * dpsi
                + b1 * self.psi_prime.d2(r)
                + (1.0 - b1) * self.xi_local.d2(r))

    def factor_piecewise(self, r):
        """Conformal factor of g_t along this side's chart column."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        body = r >= self.r_out
        ann = (r < self.r_out) & (r > self.r_in)
        inner = r <= self.r_in
        out[body] = self.psi_prime.value(r[body])
        out[ann] = self.psi_t(r[ann])
        out[inner] = self.xi_local.value(r[inner])
        return out

    def angular_profiles(self, r):
        """Legendre split psi_t = A(r) + B(r) P2(cos theta) with two
        radial derivatives of each part (B from the traceless germ term,
        supported where beta1 > 0)."""
        r = np.asarray(r, dtype=float)
        b1 = self.transition.beta1(r)
        db = self.transition.beta1_d1(r)
        d2b = self.transition.beta1_d2(r)
        e = self.quad_eta
        a0 = self.psi_t(r)
        a1 = self.psi_t_d1(r)
        a2 = self.psi_t_d2(r)
        b0 = b1 * e * r**2
        b1d = db * e * r**2 + 2.0 * b1 * e * r
        b2d = d2b * e * r**2 + 4.0 * db * e * r + 2.0 * b1 * e
        return a0, a1, a2, b0, b1d, b2d


@dataclass
class ConstantErrorRegion:
    """Region where the curvature error equals a known constant."""

    label: str
    eps_value: float
    volume: float


@dataclass
class Gluing:
    """Coordinate identification between two charts of the complex.

    kind 'scaling': w_b = w_a / scale; kind 'inversion':
    w_b = scale * w_a/|w_a|^2.  `overlap` is a radius interval in
    a-chart coordinates on which both charts describe g_t.
    """

    chart_a: str
    chart_b: str
    kind: str
    scale: float
    overlap: tuple


@dataclass
class FamilyComplex:
    """A glued family member: charts, factor fields, gluings, metadata."""

    params: GlueParams
    constants: ConformalConstants
    m_prime: object
    m_doubleprime: object
    sides: list
    homothety: float
    eps_normalizer: float
    charts: dict = dc_field(default_factory=dict)   # name -> (range, factor fn)
    gluings: list = dc_field(default_factory=list)
    chart_to_chart_scale: float = 1.0   # |v'| |v''| = this, across the neck
    metadata: dict = dc_field(default_factory=dict)

    @property
    def nu(self) -> float:
        return self.params.nu

    def side(self, label: str) -> GluingSide:
        for s in self.sides:
            if s.label == label:
                return s
        raise KeyError(label)

    def body_volume(self, side: GluingSide) -> float:
        """Volume of the body component outside the transition annulus."""
        c = self.constants
        n = c.n
        w = sphere_area(n)
        ball, _ = _quad_log(lambda r: side.psi_prime.value(r) ** c.p
                            * r ** (n - 1), 1e-12, side.r_out)
        return side.model.volume() - w * ball

    def annulus_volume(self, side: GluingSide) -> float:
        c = self.constants
        n = c.n
        if side.quad_eta:
            mu, wts = _gauss_mu()
            p2 = _legendre2(mu)

            def dens(r):
                a0, _, _, b0, _, _ = side.angular_profiles(np.atleast_1d(r))
                psi = a0[:, None] + b0[:, None] * p2[None, :]
                return float(((psi ** c.p @ wts) * np.pi
                               * np.atleast_1d(r) ** (n - 1))[0])
            val, _ = _quad_log(dens, side.r_in, side.r_out)
            return 2.0 * val
        val, _ = _quad_log(lambda r: side.psi_t(r) ** c.p * r ** (n - 1),
                           side.r_in, side.r_out)
        return sphere_area(n) * val

    def inner_volume(self, side: GluingSide) -> float:
        """Volume of the scalar-flat zone between waist and annulus."""
        c = self.constants
        n = c.n
        val, _ = _quad_log(lambda r: side.xi_local.value(r) ** c.p
                           * r ** (n - 1), side.waist_w, side.r_in)
        return sphere_area(n) * val

    def total_volume(self) -> float:
        tot = 0.0
        for s in self.sides:
            tot += self.body_volume(s) + self.annulus_volume(s) \
                + self.inner_volume(s)
        return tot

    def constant_error_regions(self) -> list:
        """Scalar-flat zones carry error nu for the +-1 families."""
        regions = []
        if self.nu != 0.0:
            for s in self.sides:
                regions.append(ConstantErrorRegion(
                    label=f"{s.label}:inner", eps_value=self.nu,
                    volume=self.inner_volume(s)))
        return regions

    def to_json(self) -> str:
        doc = {"params": self.params.describe(),
               "m_prime": _describe_model(self.m_prime),
               "m_doubleprime": _describe_model(self.m_doubleprime),
               "homothety": self.homothety,
               "eps_normalizer": self.eps_normalizer,
               "chart_to_chart_scale": self.chart_to_chart_scale,
               "metadata": self.metadata}
        return json.dumps(doc, sort_keys=True, indent=1)


def _describe_model(m):
    return None if m is None else m.describe()


def family_from_json(text: str) -> FamilyComplex:
    doc = json.loads(text)
    params = GlueParams(**{k: v for k, v in doc["params"].items()})
    mp = model_from_descriptor(doc["m_prime"]) if doc["m_prime"] else None
    md = model_from_descriptor(doc["m_doubleprime"]) \
        if doc["m_doubleprime"] else None
    return build_family(params, mp, md)


def _norm_quad(f, r_lo, r_hi, subdiv: int = 192, order: int = 8):
    """Composite Gauss-Legendre quadrature of f(r) dr in log coordinates.

    Deterministic and robust for integrands with |.|^q cusps, where
    globally adaptive schemes stall near machine accuracy; the error
    estimate is the difference against the half-resolution result.
    """
    nodes, wts = np.polynomial.legendre.leggauss(order)

    def composite(m):
        edges = np.linspace(np.log(r_lo), np.log(r_hi), m + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        s = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * wts[None, :]).ravel()
        r = np.exp(s)
        vals = np.array([f(ri) * ri for ri in r])
        return float(np.dot(vals, w))

    coarse = composite(subdiv // 2)
    fine = composite(subdiv)
    err = abs(fine - coarse)
    if err > max(1e-9, 1e-4 * abs(fine)):
        raise QuadratureError(
            f"norm quadrature did not converge (estimate {err:.3e})",
            estimate=err)
    return fine, err


def _quad_log(f, r_lo, r_hi, tol=1e-11, scale=0.0):
    """Adaptive quadrature of f(r) dr on [r_lo, r_hi] in log coordinates.

    Raises QuadratureError (with the achieved estimate) if the reported
    error is not small relative to the result (or to `scale`, for
    integrands with cancellation).
    """
    def g(s):
        r = np.exp(s)
        return f(r) * r

    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", IntegrationWarning)
        val, err = quad(g, np.log(r_lo), np.log(r_hi),
                        epsabs=0.0, epsrel=tol, limit=400)
    if err > max(1e-12, 3e-6 * max(abs(val), scale)):
        raise QuadratureError(
            f"quadrature did not converge (estimate {err:.3e})",
            estimate=err)
    return val, err


# ---------------------------------------------------------------------------
# build_family
# ---------------------------------------------------------------------------

def build_family(params: GlueParams, m_prime, m_doubleprime) -> FamilyComplex:
    """Assemble a glued family member from its parameters and models.

    Validates that the models carry the curvature the family kind
    expects, builds per-side transition data plus the chart/gluing table
    used by the overlap-consistency check, and records volume metadata.
    """
    c = params.constants
    fam = params.family
    if fam == "HatNegZero":
        return _build_hat_family(params, m_prime, m_doubleprime)

    if m_prime.n != c.n:
        raise InvalidParameterError("m_prime dimension mismatch")
    r_in, r_out = params.annulus_radii()
    if r_out > m_prime.chart_radius():
        raise InvalidParameterError(
            f"annulus radius {r_out:.4f} exceeds chart radius "
            f"{m_prime.chart_radius():.4f} of {m_prime.name}")

    if fam in NECK_FAMILIES:
        if m_doubleprime is None:
            raise InvalidParameterError(f"{fam} needs two body models")
        for m in (m_prime, m_doubleprime):
            if fam == "NeckJoin" and m.nu == 0.0:
                raise InvalidParameterError(
                    "NeckJoin joins bodies of curvature +-1; zero-curvature "
                    "bodies belong to ZeroNeck")
            if fam == "ZeroNeck" and m.nu != 0.0:
                raise InvalidParameterError(
                    "ZeroNeck requires scalar-flat bodies")
        if fam == "NeckJoin" and not (m_prime.nu == m_doubleprime.nu
                                      == params.nu):
            raise InvalidParameterError(
                "NeckJoin bodies must share the target curvature")
        graft = SyntheticAFModel(mu=1.0, n=c.n)   # the standard neck end
        if fam == "ZeroNeck":
            vp, vd = m_prime.volume(), m_doubleprime.volume()
            if abs(vp - vd) > 0.01 * max(vp, vd):
                warnings.warn(VolumeMismatchWarning(
                    f"ZeroNeck volumes differ: {vp:.6g} vs {vd:.6g}; the "
                    "balanced-volume estimates will not hold",
                    vol_prime=vp, vol_doubleprime=vd))
        body_models = [("prime", m_prime), ("doubleprime", m_doubleprime)]
    else:
        if not isinstance(m_doubleprime, SyntheticAFModel):
            raise InvalidParameterError(
                f"{fam} grafts a synthetic asymptotically flat end")
        if m_doubleprime.c != 0.0:
            raise InvalidParameterError(
                "graft ends must be exactly scalar flat (c = 0); nonzero "
                "correction terms contaminate the curvature rates")
        if fam == "PosGraft" and m_prime.nu != params.nu:
            raise InvalidParameterError(
                "PosGraft body must carry the target curvature")
        if fam == "ZeroGraft" and m_prime.nu != 0.0:
            raise InvalidParameterError("ZeroGraft body must be scalar flat")
        if fam == "ZeroGraft" and m_doubleprime.mu != params.mu:
            m_doubleprime = SyntheticAFModel(mu=params.mu, n=c.n)
        graft = m_doubleprime
        body_models = [("prime", m_prime)]

    scale = params.graft_argument_scale
    af = graft.af_factor()
    cutoff = default_profile()
    sides = []
    for label, model in body_models:
        side = GluingSide(
            label=label,
            model=model,
            psi_prime=model.chart_factor(),
            xi_local=RescaledArgument(af, scale),
            transition=TransitionProfile(cutoff, r_in, r_out),
            r_in=r_in, r_out=r_out,
            waist_w=scale * graft.waist,
            exact_chart=(model.cylinder_chart()
                         if isinstance(model, ProductSphereModel) else None),
            quad_eta=float(getattr(model, "quadrupole_eta", 0.0)))
        sides.append(side)

    complex_ = FamilyComplex(
        params=params, constants=c, m_prime=m_prime,
        m_doubleprime=m_doubleprime, sides=sides,
        homothety=params.homothety_scale,
        eps_normalizer=(c.a if fam in ZERO_FAMILIES else 1.0),
        chart_to_chart_scale=scale * scale * graft.inversion_scale
        if fam in NECK_FAMILIES else scale * graft.inversion_scale,
        metadata={"alpha": params.alpha, "k": params.k,
                  "graft_mu": graft.mu},
    )
    _register_charts(complex_, graft)
    return complex_


def _register_charts(fc: FamilyComplex, graft):
    """Chart table + gluings for the overlap-consistency check."""
    c = fc.constants
    n = c.n
    scale = fc.params.graft_argument_scale
    hom_factor = fc.homothety ** ((n - 2) / 4.0)
    af = graft.af_factor()

    for s in fc.sides:
        fc.charts[f"{s.label}:w"] = ((s.waist_w, s.model.chart_radius()),
                                     s.factor_piecewise)
    fc.charts["end:u"] = ((graft.waist, fc.sides[0].r_in / scale),
                          lambda u: hom_factor * af.value(np.asarray(u)))

    for s in fc.sides:
        fc.gluings.append(Gluing(
            chart_a=f"{s.label}:w", chart_b="end:u", kind="scaling",
            scale=scale, overlap=(s.waist_w, s.r_in)))
    if len(fc.sides) == 2:
        lo = fc.chart_to_chart_scale / fc.sides[1].r_in
        fc.gluings.append(Gluing(
            chart_a="prime:w", chart_b="doubleprime:w", kind="inversion",
            scale=fc.chart_to_chart_scale,
            overlap=(max(lo, fc.sides[0].waist_w), fc.sides[0].r_in)))
    elif graft.mu > 0.0:
        # synthetic end is involutive: its far coordinates invert onto
        # themselves through the waist
        fc.gluings.append(Gluing(
            chart_a=f"{fc.sides[0].label}:w", chart_b=f"{fc.sides[0].label}:w",
            kind="inversion",
            scale=scale * scale * graft.inversion_scale,
            overlap=(fc.sides[0].waist_w, fc.sides[0].r_in)))


def _build_hat_family(params, m_prime, m_doubleprime):
    """Metadata-only complex for the negative-zero gluing; the conformal
    factor is produced by build_hat_metric from a discrete Green field."""
    c = params.constants
    if m_doubleprime is None or m_doubleprime.nu != 0.0:
        raise InvalidParameterError(
            "HatNegZero rescales a scalar-flat body")
    n = c.n
    return FamilyComplex(
        params=params, constants=c, m_prime=m_prime,
        m_doubleprime=m_doubleprime, sides=[],
        homothety=params.t ** (2.0 * (n - 2) / n),
        eps_normalizer=1.0,
        metadata={
            "kappa": (n - 2) / n,
            "base_exponent": (n - 2) ** 2 / (2.0 * n),
            "green_exponent": (n - 2) * (n + 2) / (2.0 * n),
            "note": "embedding constant degrades like t^(-(n-2)/n); "
                    "metric construction only, no solve",
        })


def overlap_consistency(fc: FamilyComplex, rng=None, samples: int = 64):
    """Max relative factor-law violation over random points of every
    declared chart overlap; exact constructions sit at roundoff.

    For a gluing w_b = phi(w_a) with conformal scale J the two factor
    fields must satisfy f_a(w) = f_b(phi(w)) J(w)^((n-2)/2) wherever both
    charts describe g_t.
    """
    rng = np.random.default_rng(rng)
    n = fc.constants.n
    worst = 0.0
    for g in fc.gluings:
        _, fa = fc.charts[g.chart_a]
        _, fb = fc.charts[g.chart_b]
        lo, hi = g.overlap
        if not lo < hi:
            raise InvalidParameterError(
                f"empty overlap for gluing {g.chart_a} ~ {g.chart_b}")
        r = np.exp(rng.uniform(np.log(lo), np.log(hi), size=samples))
        if g.kind == "scaling":
            rb = r / g.scale
            jac = np.full_like(r, 1.0 / g.scale)
        elif g.kind == "inversion":
            rb = g.scale / r
            jac = g.scale / r**2
        else:
            raise InvalidParameterError(f"unknown gluing kind {g.kind}")
        lhs = fa(r)
        rhs = fb(rb) * jac ** ((n - 2) / 2.0)
        worst = max(worst, float(np.max(np.abs(rhs / lhs - 1.0))))
    return worst


# ---------------------------------------------------------------------------
# Curvature error
# ---------------------------------------------------------------------------

@dataclass
class SideAnnulus:
    """Radial curvature-error data on one transition annulus."""

    label: str
    r_in: float
    r_out: float
    grid: np.ndarray
    psi_prime: np.ndarray
    xi: np.ndarray
    beta1: np.ndarray
    psi_t: np.ndarray
    eps: np.ndarray              # normalized error field on the grid
    true_deficit: np.ndarray     # nu - S(g_t), no normalization
    eps_fn: object               # callable r -> normalized error
    psi_t_fn: object
    volume_weight_fn: object     # r -> psi_t^p r^(n-1) (omega excluded)
    angular_moment: object = None   # traceless second-order data; dropped
                                    # for radial germs (sphere average 0)


@dataclass
class AnnulusModel:
    """Curvature-error model of a family member: one SideAnnulus per
    gluing annulus plus the constant-error regions away from them."""

    complex: FamilyComplex
    sides: list
    constant_regions: list

    @property
    def primary(self) -> SideAnnulus:
        return self.sides[0]


def _gauss_mu(order: int = 24):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def _legendre2(mu):
    return 0.5 * (3.0 * mu**2 - 1.0)


def _side_curvature(fc: FamilyComplex, side: GluingSide, r):
    """Scalar curvature of g_t = psi_t^(p-2) h on the annulus at radii r
    (flat chart: curvature of h is zero), from exact derivatives."""
    c = fc.constants
    r = np.asarray(r, dtype=float)
    psi = side.psi_t(r)
    lap = -(side.psi_t_d2(r) + (c.n - 1) * side.psi_t_d1(r) / r)
    return psi ** (1.0 - c.p) * (c.a * lap)


def _side_curvature_2d(fc: FamilyComplex, side: GluingSide, r, mu):
    """Curvature on the annulus with the traceless germ term included,
    on the tensor grid radii x mu (mu = cos theta); n = 3 only.

    psi_t = A(r) + B(r) P2(mu); the spherical harmonic P2 contributes
    -l(l+n-2) B/r^2 = -6B/r^2 to the flat Laplacian.
    """
    c = fc.constants
    if c.n != 3:
        raise InvalidParameterError("angular germs implemented for n = 3")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    a0, a1, a2, b0, b1, b2 = side.angular_profiles(r)
    p2 = _legendre2(np.asarray(mu))
    lap_a = a2 + 2.0 * a1 / r
    lap_b = b2 + 2.0 * b1 / r - 6.0 * b0 / r**2
    psi = a0[:, None] + np.outer(b0, p2)
    lap = -(lap_a[:, None] + np.outer(lap_b, p2))
    return psi, psi ** (1.0 - c.p) * (c.a * lap)


def _side_curvature_blend_form(fc: FamilyComplex, side: GluingSide, r):
    """Same curvature via the partition-of-unity identity: the body germ
    satisfies a Lap psi' = nu' psi'^(p-1), the end factor is harmonic, so

    S = psi_t^(1-p) [ nu' beta1 psi'^(p-1)
                      + a Lap(beta1)(psi' - xi) - 2a beta1' (psi' - xi)' ].

    Used as an internal consistency check of the error engine.
    """
    c = fc.constants
    r = np.asarray(r, dtype=float)
    nu_body = side.model.nu
    psi_p = side.psi_prime.value(r)
    xi = side.xi_local.value(r)
    diff = psi_p - xi
    diff_d1 = side.psi_prime.d1(r) - side.xi_local.d1(r)
    b1 = side.transition.beta1(r)
    db = side.transition.beta1_d1(r)
    lap_b = -(side.transition.beta1_d2(r) + (c.n - 1) * db / r)
    psi_t = side.psi_t(r)
    return psi_t ** (1.0 - c.p) * (nu_body * b1 * psi_p ** (c.p - 1.0)
                                   + c.a * lap_b * diff
                                   - 2.0 * c.a * db * diff_d1)


def epsilon_field(fc: FamilyComplex, grid_points: int = 801) -> AnnulusModel:
    """Curvature-error model of the family member.

    On each annulus the error is (nu - S(g_t))/normalizer from exact
    radial derivatives; outside, it vanishes on bodies matching the
    target and equals nu on the scalar-flat neck/graft zones.
    """
    if not fc.sides:
        raise InvalidParameterError(
            "no transition annulus in this family kind")
    sides = []
    for s in fc.sides:
        grid = np.exp(np.linspace(np.log(s.r_in), np.log(s.r_out),
                                  grid_points))
        psi_t = s.psi_t(grid)
        if s.quad_eta:
            mu, _ = _gauss_mu()
            psi2d, _ = _side_curvature_2d(fc, s, grid, mu)
            if np.any(psi2d <= 0.0):
                raise NonPositiveFactorError(
                    f"blended factor not positive on annulus ({s.label})")
        elif np.any(psi_t <= 0.0):
            raise NonPositiveFactorError(
                f"blended factor not positive on annulus ({s.label})")
        s_true = _side_curvature(fc, s, grid)
        deficit = fc.nu - s_true
        eps = deficit / fc.eps_normalizer

        def eps_fn(r, _s=s):
            return (fc.nu - _side_curvature(fc, _s, r)) / fc.eps_normalizer

        def eps2d_fn(r, mu, _s=s):
            _, s_val = _side_curvature_2d(fc, _s, r, mu)
            return (fc.nu - s_val) / fc.eps_normalizer

        def wfn(r, _s=s):
            r = np.asarray(r, dtype=float)
            return _s.psi_t(r) ** fc.constants.p * r ** (fc.constants.n - 1)

        sides.append(SideAnnulus(
            label=s.label, r_in=s.r_in, r_out=s.r_out, grid=grid,
            psi_prime=s.psi_prime.value(grid), xi=s.xi_local.value(grid),
            beta1=s.transition.beta1(grid), psi_t=psi_t, eps=eps,
            true_deficit=deficit, eps_fn=eps_fn,
            psi_t_fn=s.psi_t, volume_weight_fn=wfn,
            angular_moment=({"eta": s.quad_eta, "trace": 0.0,
                             "eps2d_fn": eps2d_fn, "side": s}
                            if s.quad_eta else None)))
    return AnnulusModel(complex=fc, sides=sides,
                        constant_regions=fc.constant_error_regions())


@dataclass
class EpsilonNorms:
    q: float
    lq: float
    sup: float
    quad_error: float
    annulus_part: float
    constant_part: float


def epsilon_norms(model: AnnulusModel, q: float) -> EpsilonNorms:
    """L^q norm (volume form of g_t) and sup of the curvature error."""
    if q < 1.0:
        raise InvalidParameterError("q must be >= 1")
    c = model.complex.constants
    w = sphere_area(c.n)
    total = 0.0
    err = 0.0
    sup = 0.0
    for s in model.sides:
        if s.angular_moment is not None:
            mu, wts = _gauss_mu()
            e2d = s.angular_moment["eps2d_fn"]
            gside = s.angular_moment["side"]

            def dens(r, _e2d=e2d, _g=gside):
                r1 = np.atleast_1d(r)
                psi, s_val = _side_curvature_2d(model.complex, _g, r1, mu)
                eps = (model.complex.nu - s_val) / model.complex.eps_normalizer
                return float((((np.abs(eps) ** q * psi ** c.p) @ wts)
                               * 2.0 * np.pi * r1 ** (c.n - 1))[0])
            val, e = _norm_quad(dens, s.r_in, s.r_out)
            total += val
            err += e
            eps_grid = e2d(s.grid, mu)
            sup = max(sup, float(np.max(np.abs(eps_grid))))
            continue
        val, e = _norm_quad(lambda r, _s=s: float(np.abs(_s.eps_fn(r)) ** q
                            * _s.volume_weight_fn(r)), s.r_in, s.r_out)
        total += w * val
        err += w * e
        sup = max(sup, float(np.max(np.abs(s.eps))))
    annulus_part = total
    const_part = 0.0
    for reg in model.constant_regions:
        const_part += abs(reg.eps_value) ** q * reg.volume
        sup = max(sup, abs(reg.eps_value))
    total += const_part
    return EpsilonNorms(q=q, lq=total ** (1.0 / q), sup=sup, quad_error=err,
                        annulus_part=annulus_part ** (1.0 / q)
                        if annulus_part > 0 else 0.0,
                        constant_part=const_part ** (1.0 / q)
                        if const_part > 0 else 0.0)


@dataclass
class CurvatureIntegral:
    integrals: list          # per annulus, volume form of g_t
    leading_term: float      # (n-2) omega_{n-1} mu t^(n-2)
    alpha: float

    @property
    def integral(self) -> float:
        return self.integrals[0]


def total_curvature_integral(model: AnnulusModel,
                             params: GlueParams) -> CurvatureIntegral:
    """Integral of the (normalized) curvature error over each gluing
    annulus, with the closed-form leading term."""
    if params.family not in ZERO_FAMILIES:
        raise InvalidParameterError(
            "curvature integral applies to the zero families")
    c = model.complex.constants
    w = sphere_area(c.n)
    vals = []
    for s in model.sides:
        if s.angular_moment is not None:
            mu, wts = _gauss_mu()
            gside = s.angular_moment["side"]

            def dens(r, _g=gside):
                r1 = np.atleast_1d(r)
                psi, s_val = _side_curvature_2d(model.complex, _g, r1, mu)
                eps = (model.complex.nu - s_val) / model.complex.eps_normalizer
                return float((((eps * psi ** c.p) @ wts)
                               * 2.0 * np.pi * r1 ** (c.n - 1))[0])
            val, _ = _quad_log(dens, s.r_in, s.r_out)
            vals.append(val)
            continue
        val, _ = _quad_log(lambda r, _s=s: _s.eps_fn(r)
                           * _s.volume_weight_fn(r), s.r_in, s.r_out)
        vals.append(w * val)
    mu = model.complex.metadata.get("graft_mu", params.mu)
    leading = (c.n - 2) * w * mu * params.t ** (c.n - 2)
    return CurvatureIntegral(integrals=vals, leading_term=leading,
                             alpha=params.alpha)


# ---------------------------------------------------------------------------
# Conformal class matching
# ---------------------------------------------------------------------------

def conformal_class_match(fc_a: FamilyComplex, fc_b: FamilyComplex,
                          rng=None, samples: int = 48) -> float:
    """Deviation of two family members from defining the same conformal
    class on the same connected sum.

    A point of the neck zone is fixed by its body-chart coordinate w'
    and, through complex B's identification, by a far-chart coordinate
    w'' with |w'||w''| = sigma_B.  If the two complexes define the same
    class, the factor ratio of metric A to metric B is the same smooth
    function whether it is read off in the body chart or in the far
    chart; the returned discrepancy is the worst relative mismatch of
    the two readings over random samples.  Identical identifications sit
    at roundoff; mismatched parametrizations are order one or larger.
    """
    if _describe_model(fc_a.m_prime) != _describe_model(fc_b.m_prime):
        raise InvalidParameterError("component manifolds differ")
    rng = np.random.default_rng(rng)

    sb = fc_b.sides[0]
    hi = min(fc_a.sides[0].r_in, sb.r_in)
    lo = fc_b.chart_to_chart_scale / sb.r_in
    if not lo < hi:
        lo, hi = 0.25 * hi * (lo / hi) ** 0.5, hi
    r = np.exp(rng.uniform(np.log(lo), np.log(hi), size=samples))

    _, fa_prime = fc_a.charts["prime:w"]
    _, fb_prime = fc_b.charts["prime:w"]
    ratio_prime = fa_prime(r) / fb_prime(r)

    w_far = fc_b.chart_to_chart_scale / r
    ratio_far = _far_chart_factor(fc_a)(w_far) / _far_chart_factor(fc_b)(w_far)
    return float(np.max(np.abs(ratio_far / ratio_prime - 1.0)))


def _far_chart_factor(fc: FamilyComplex):
    """Factor field of g_t in the far-side normalized chart coordinates.

    Neck joins carry an explicit far body chart; graft families reach
    the far chart by inverting the body-chart column through their own
    identification scale.
    """
    if len(fc.sides) == 2:
        _, f = fc.charts["doubleprime:w"]
        return f
    _, f = fc.charts[f"{fc.sides[0].label}:w"]
    sig = fc.chart_to_chart_scale
    n = fc.constants.n

    def far(wpp):
        wpp = np.asarray(wpp, dtype=float)
        return f(sig / wpp) * (sig / wpp**2) ** ((n - 2) / 2.0)
    return far


# ---------------------------------------------------------------------------
# Hat construction (negative body, scalar-flat graft)
# ---------------------------------------------------------------------------

@dataclass
class HatMetric:
    factor: np.ndarray
    s_hat: np.ndarray
    kappa: float
    t: float


def build_hat_metric(constants: ConformalConstants, t: float,
                     vol_doubleprime: float, xi_values) -> HatMetric:
    """Conformal factor and closed-form curvature of the rescaled body.

    xi is the mean-corrected Green field of a*Lap on the scalar-flat
    body, normalized to minimum value 0; the factor

        t^((n-2)^2/2n) + t^((n-2)(n+2)/2n) vol * xi

    produces scalar curvature
        -(1 + t^(2(n-2)/n) vol * xi)^(-(n+2)/(n-2)),
    which lies in [-1, 0) and approaches -1 away from the pole.
    """
    n = constants.n
    xi = np.asarray(xi_values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(xi))))
    if float(np.min(xi)) < -1e-9 * scale:
        raise InvalidParameterError(
            "green field must be normalized to minimum value 0")
    xi = np.maximum(xi, 0.0)
    if not 0.0 < t < 1.0:
        raise InvalidParameterError("t must lie in (0, 1)")
    base = t ** ((n - 2) ** 2 / (2.0 * n))
    green = t ** ((n - 2) * (n + 2) / (2.0 * n))
    factor = base + green * vol_doubleprime * xi
    s_hat = -(1.0 + t ** (2.0 * (n - 2) / n) * vol_doubleprime * xi) \
        ** (-(n + 2.0) / (n - 2.0))
    if np.any(s_hat < -1.0 - 1e-12) or np.any(s_hat >= 0.0):
        raise InvalidParameterError("hat curvature escaped [-1, 0)")
    return HatMetric(factor=factor, s_hat=s_hat, kappa=(n - 2) / n, t=t)
