"""Smooth cutoff profile used to blend conformal factors across a neck.

The profile sigma: R -> [0,1] equals 1 for x <= 1, 0 for x >= 2 and
decreases strictly in between.  We realize it as the quintic smoothstep
(C^2 at both joints, closed-form derivatives), which keeps every annulus
computation quadrature-limited rather than profile-limited.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _poly(y):
    return 6.0 * y**5 - 15.0 * y**4 + 10.0 * y**3


def _poly_d1(y):
    return 30.0 * y**4 - 60.0 * y**3 + 30.0 * y**2


def _poly_d2(y):
    return 120.0 * y**3 - 180.0 * y**2 + 60.0 * y


@dataclass(frozen=True)
class CutoffProfile:
    """sigma(x): 1 for x <= lo, 0 for x >= hi, C^2 quintic in between."""

    lo: float = 1.0
    hi: float = 2.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("cutoff window must have hi > lo")

    def _y(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo)
                       / (self.hi - self.lo), 0.0, 1.0)

    def value(self, x):
        return 1.0 - _poly(self._y(x))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        y = (x - self.lo) / (self.hi - self.lo)
        inside = (y > 0.0) & (y < 1.0)
        out = np.zeros_like(y)
        out[inside] = -_poly_d1(y[inside]) / (self.hi - self.lo)
        return out

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        y = (x - self.lo) / (self.hi - self.lo)
        inside = (y > 0.0) & (y < 1.0)
        out = np.zeros_like(y)
        out[inside] = -_poly_d2(y[inside]) / (self.hi - self.lo) ** 2
        return out

    @property
    def max_slope(self) -> float:
        # |sigma'| peaks midway: 30/16 / (hi - lo)
        return 1.875 / (self.hi - self.lo)


def default_profile() -> CutoffProfile:
    return CutoffProfile(1.0, 2.0)
