"""Dimensional constants of the conformal scalar-curvature problem.

For a manifold dimension n >= 3 the whole toolkit is parametrized by

    a = 4(n-1)/(n-2),   b = 4/(n-2),   p = 2n/(n-2),

so that g~ = psi^(p-2) g rescales scalar curvature via
S~ = psi^(1-p) (a*Lap(psi) + S*psi).  Lap denotes the geometer's
(nonnegative-spectrum) Laplacian -div grad throughout; see README.

Also hosts the fixed-point nonlinearity
f(x) = |1+x|^((n+2)/(n-2)) - 1 - (n+2)x/(n-2) and its Lipschitz
majorant constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class ConformalConstants:
    """Exact constants attached to one dimension n."""

    n: int
    a: float
    b: float
    p: float

    @property
    def q_exponent(self) -> float:
        """(n+2)/(n-2) = p - 1, the power in the Yamabe nonlinearity."""
        return self.p - 1.0

    @property
    def grad_exponent(self) -> float:
        """4/(n-2) = p - 2, the exponent appearing in contraction bounds."""
        return self.p - 2.0

    def as_fractions(self):
        n = self.n
        return (Fraction(4 * (n - 1), n - 2), Fraction(4, n - 2),
                Fraction(2 * n, n - 2))


def make_constants(n: int) -> ConformalConstants:
    """Exact a, b, p for dimension n; rejects n < 3."""
    if not isinstance(n, (int, np.integer)):
        raise InvalidParameterError(f"dimension must be an integer, got {n!r}")
    if n < 3:
        raise InvalidParameterError(f"dimension must be >= 3, got {n}")
    n = int(n)
    a = Fraction(4 * (n - 1), n - 2)
    b = Fraction(4, n - 2)
    p = Fraction(2 * n, n - 2)
    return ConformalConstants(n=n, a=float(a), b=float(b), p=float(p))


def nonlinearity_f(x, constants: ConformalConstants):
    """f(x) = |1+x|^((n+2)/(n-2)) - 1 - (n+2)x/(n-2).

    Vanishes to second order at x = 0; accepts scalars or arrays and
    sign-changing input (the absolute value is part of the definition).
    """
    q = constants.q_exponent
    x = np.asarray(x, dtype=float)
    out = np.abs(1.0 + x) ** q - 1.0 - q * x
    return float(out) if out.ndim == 0 else out


def lipschitz_constants(constants: ConformalConstants):
    """Constants (F4, F5) with
    |f(x)-f(y)| <= |x-y| (F4(|x|+|y|) + F5(|x|^(4/(n-2)) + |y|^(4/(n-2)))).

    F4 = 0 for n >= 6, where the exponent q-1 <= 1 makes the pure-power
    bound sufficient.  For n < 6 the constants majorize
    |f'(s)| <= q((1+|s|)^(q-1) - 1) split into a linear and a power term;
    the split is validated by a sampled property test.
    """
    n = constants.n
    q = constants.q_exponent      # (n+2)/(n-2), in (1, 5]
    r = constants.grad_exponent   # 4/(n-2) = q - 1
    if n >= 6:
        return 0.0, 2.0 * q
    # |f'(s)| <= q((1+|s|)^(q-1) - 1); expand (1+s)^(q-1) binomially for the
    # integer cases n = 3, 4 (q-1 = 4, 2) and bound intermediate powers by
    # max(s, s^r) <= s + s^r; n = 5 has q-1 = 7/3, bounded by the n = 4 shape.
    if n == 3:
        # (1+s)^4 - 1 = 4s + 6s^2 + 4s^3 + s^4 <= 4s + 10(s + s^4) + s^4
        return q * 14.0, q * 11.0
    if n == 4:
        # (1+s)^2 - 1 = 2s + s^2 <= 2s + (s + s^2)
        return q * 3.0, q * 2.0
    # n == 5: (1+s)^(7/3) - 1 <= (7/3)s(1+s)^(4/3) <= (7/3)(s + 2(s+s^(4/3)))
    return q * 7.0, q * 5.0


def lipschitz_gap(x, y, constants: ConformalConstants):
    """Slack of the Lipschitz majorant at (x, y); >= 0 when the bound holds."""
    f4, f5 = lipschitz_constants(constants)
    r = constants.grad_exponent
    fx = nonlinearity_f(x, constants)
    fy = nonlinearity_f(y, constants)
    lhs = abs(fx - fy)
    rhs = abs(x - y) * (f4 * (abs(x) + abs(y))
                        + f5 * (abs(x) ** r + abs(y) ** r))
    return rhs - lhs
