"""Conformal scalar-curvature calculus.

Core transformation: for g~ = psi^(p-2) g,

    S~ = psi^(1-p) (a*Lap(psi) + S*psi),

with Lap the nonnegative Laplacian of the background g.  A metric
psi^(p-2) g has constant scalar curvature nu exactly when the residual
a*Lap(psi) + S psi - nu |psi|^(p-1) vanishes.
"""

from __future__ import annotations

import numpy as np

from .constants import ConformalConstants
from .errors import (DomainMismatchError, InvalidParameterError,
                     NonPositiveFactorError)
from .fields import (RadialGrid, ScalarField, AnalyticRadialLaplace,
                     radial_laplacian_values, same_domain)


def conformal_scalar_curvature(psi: ScalarField, s_background: ScalarField,
                               laplace) -> ScalarField:
    """Scalar curvature of psi^(p-2) g given the background curvature of g.

    `laplace` must implement the nonnegative Laplacian of g and carry the
    dimension constants.  Homothety law: scaling psi by a constant c > 0
    scales the result by c^(2-p).
    """
    same_domain(psi, s_background)
    c = laplace.constants
    if np.any(psi.values <= 0.0):
        raise NonPositiveFactorError("conformal factor must be positive")
    lap = np.asarray(laplace.apply(psi.values), dtype=float)
    out = psi.values ** (1.0 - c.p) * (c.a * lap
                                       + s_background.values * psi.values)
    return psi.like(out)


def yamabe_residual(psi: ScalarField, s_background: ScalarField, nu: float,
                    laplace) -> ScalarField:
    """a*Lap(psi) + S psi - nu |psi|^(p-1); zero iff psi^(p-2) g has
    constant scalar curvature nu.  Sign-changing psi is allowed; the
    absolute value is part of the equation."""
    same_domain(psi, s_background)
    c = laplace.constants
    lap = np.asarray(laplace.apply(psi.values), dtype=float)
    out = (c.a * lap + s_background.values * psi.values
           - nu * np.abs(psi.values) ** (c.p - 1.0))
    return psi.like(out)


def hilbert_action(s_field: ScalarField, volume_form: ScalarField,
                   constants: ConformalConstants) -> float:
    """Total scalar curvature normalized by volume:
    Q = (integral of S dV) / vol^(2/p)."""
    same_domain(s_field, volume_form)
    w = volume_form.values
    if np.any(w < 0.0):
        raise InvalidParameterError("volume form must be nonnegative")
    vol = float(np.sum(w))
    if vol <= 0.0:
        raise InvalidParameterError("total volume must be positive")
    total = float(np.sum(s_field.values * w))
    return total / vol ** (2.0 / constants.p)


def scalar_curvature_of_factor(factor, constants: ConformalConstants, r,
                               background_curvature: float = 0.0):
    """Closed-form evaluation of the curvature of factor^(p-2) h on a
    flat chart at radii r (h flat => background curvature 0 unless the
    chart itself is curved and supplies a constant)."""
    grid = RadialGrid(constants.n, np.asarray(r, dtype=float))
    handle = AnalyticRadialLaplace(constants, grid, factor)
    psi = handle.field()
    s_bg = psi.like(np.full(len(grid), float(background_curvature)))
    return conformal_scalar_curvature(psi, s_bg, handle)


def extract_mass(samples, constants: ConformalConstants):
    """Least-squares mass of an asymptotically flat factor.

    `samples` is a sequence of (radius, value) pairs with value > 0.
    Fits value - 1 against mu r^(2-n) + c r^(1-n) over the outermost
    decade of radii (the expansion is asymptotic; inner radii bias mu)
    and returns (mu, rms residual of the fit).
    """
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidParameterError("samples must be (radius, value) pairs")
    r, v = pts[:, 0], pts[:, 1]
    if np.unique(r).size < 2:
        raise InvalidParameterError(
            "degenerate sample set: need at least 2 distinct radii")
    if np.any(v <= 0.0):
        raise NonPositiveFactorError("factor samples must be positive")
    r_max = r.max()
    window = r >= r_max / 10.0
    if np.unique(r[window]).size < 2:
        window = np.ones_like(r, dtype=bool)
    rw, vw = r[window], v[window]
    n = constants.n
    design = np.stack([rw ** (2 - n), rw ** (1 - n)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(design, vw - 1.0, rcond=None)
    resid = design @ coef - (vw - 1.0)
    rms = float(np.sqrt(np.mean(resid**2)))
    return float(coef[0]), rms


def sphere_area(n: int) -> float:
    """Volume of the unit sphere S^(n-1) in R^n."""
    from scipy.special import gamma
    return float(2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0))


def fundamental_pole_coefficient(constants: ConformalConstants) -> float:
    """Pole coefficient of the Green function of a*Lap against a delta
    source on flat R^n: (a (n-2) omega_{n-1})^(-1)."""
    n = constants.n
    return 1.0 / (constants.a * (n - 2) * sphere_area(n))
