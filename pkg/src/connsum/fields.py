"""Scalar fields over sample domains, and Laplacian handles.

A ScalarField is a plain array of values bound to a domain handle; the
domain is either a radial grid on a flat chart or a discrete manifold.
Operators that need the Laplacian take a handle object with an
``apply(values) -> values`` method and a ``constants`` attribute, so the
conformal formulas are written once and reused by the analytic radial
path and the discrete path.

Sign convention: every handle implements the geometer's Laplacian
-div grad, whose spectrum is nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import ConformalConstants
from .errors import DomainMismatchError


@dataclass(frozen=True)
class RadialGrid:
    """Sample radii on a flat chart of dimension n."""

    n: int
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        if np.any(self.r <= 0):
            raise ValueError("radial grid requires strictly positive radii")

    def __len__(self):
        return self.r.size


@dataclass
class ScalarField:
    """Values bound to a domain; `volume_tag` records which metric's
    volume form integrals against this field should use."""

    domain: object
    values: np.ndarray
    volume_tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = domain_size(self.domain)
        if n is not None and self.values.shape != (n,):
            raise DomainMismatchError(
                f"field of length {self.values.shape} on domain of size {n}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains non-finite values")

    def like(self, values) -> "ScalarField":
        return ScalarField(self.domain, np.asarray(values, dtype=float),
                           self.volume_tag)


def domain_size(domain) -> int | None:
    if hasattr(domain, "__len__"):
        return len(domain)
    if hasattr(domain, "node_count"):
        return domain.node_count
    return None


def same_domain(a: ScalarField, b: ScalarField):
    if a.domain is not b.domain and domain_size(a.domain) != domain_size(b.domain):
        raise DomainMismatchError("fields live on different domains")
    if a.values.shape != b.values.shape:
        raise DomainMismatchError("fields have different sample counts")


def radial_laplacian_values(grid: RadialGrid, f1, f2):
    """-(f'' + (n-1) f'/r) from given derivative samples."""
    return -(np.asarray(f2, dtype=float)
             + (grid.n - 1) * np.asarray(f1, dtype=float) / grid.r)


class AnalyticRadialLaplace:
    """Nonnegative Laplacian on a radial grid, exact for the one factor
    it was built from (closed-form derivatives)."""

    def __init__(self, constants: ConformalConstants, grid: RadialGrid,
                 factor):
        if constants.n != grid.n:
            raise DomainMismatchError("constants and grid disagree on n")
        self.constants = constants
        self.grid = grid
        self.factor = factor

    def field(self) -> ScalarField:
        return ScalarField(self.grid, self.factor.value(self.grid.r))

    def apply(self, values):
        values = np.asarray(values, dtype=float)
        ref = self.factor.value(self.grid.r)
        if not np.allclose(values, ref, rtol=1e-12, atol=1e-12):
            raise DomainMismatchError(
                "analytic radial Laplacian only applies to its own factor")
        return radial_laplacian_values(self.grid,
                                       self.factor.d1(self.grid.r),
                                       self.factor.d2(self.grid.r))


class FiniteDifferenceRadialLaplace:
    """Second-order stencil Laplacian on a (possibly nonuniform) radial
    grid; one-sided at the ends.  Used as an independent oracle."""

    def __init__(self, constants: ConformalConstants, grid: RadialGrid):
        if constants.n != grid.n:
            raise DomainMismatchError("constants and grid disagree on n")
        self.constants = constants
        self.grid = grid

    def apply(self, values):
        r = self.grid.r
        v = np.asarray(values, dtype=float)
        d1 = np.gradient(v, r, edge_order=2)
        d2 = np.gradient(d1, r, edge_order=2)
        return -(d2 + (self.grid.n - 1) * d1 / r)
