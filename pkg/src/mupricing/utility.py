"""Utility functions on (0, inf) with Inada conditions and their conjugates.

Two one-parameter families are shipped:

* power:  U(x) = x**gamma with gamma in (0, 1); U(0) = 0 is finite.
* log:    U(x) = ln(x); U(0) = -inf.

Both are extended to the whole line by U(x) = -inf for x < 0 and
U(0) = U(0+), which is the unique concave upper semi-continuous extension.
The conjugate is V(y) = sup_x (U(x) - x*y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UtilityFn:
    """A utility in one of the supported families.

    kind is "power" or "log"; gamma is only meaningful for the power family.
    """

    kind: str
    gamma: float = 0.5

    def __post_init__(self):
        if self.kind not in ("power", "log"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "power" and not 0.0 < self.gamma < 1.0:
            raise ValueError("power utility requires gamma in (0, 1)")

    # -- primal ------------------------------------------------------------

    def value(self, x):
        """U(x), vectorized; -inf below 0, U(0+) at 0."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        pos = x > 0.0
        if self.kind == "power":
            out[pos] = np.power(x[pos], self.gamma)
            out[x == 0.0] = 0.0
        else:
            out[pos] = np.log(x[pos])
        return out if out.shape else float(out)

    def derivative(self, x):
        """U'(x) on (0, inf)."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0):
            raise ValueError("derivative defined on (0, inf) only")
        if self.kind == "power":
            out = self.gamma * np.power(x, self.gamma - 1.0)
        else:
            out = 1.0 / x
        return out if out.shape else float(out)

    def second_derivative(self, x):
        """U''(x) on (0, inf); strictly negative."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0):
            raise ValueError("second derivative defined on (0, inf) only")
        if self.kind == "power":
            g = self.gamma
            out = g * (g - 1.0) * np.power(x, g - 2.0)
        else:
            out = -1.0 / (x * x)
        return out if out.shape else float(out)

    def inverse_derivative(self, y):
        """I(y) = (U')^{-1}(y) for y > 0."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0.0):
            raise ValueError("inverse derivative defined for y > 0")
        if self.kind == "power":
            out = np.power(y / self.gamma, 1.0 / (self.gamma - 1.0))
        else:
            out = 1.0 / y
        return out if out.shape else float(out)

    # -- dual --------------------------------------------------------------

    def conjugate(self, y):
        """V(y) = U(I(y)) - y I(y) for y > 0, +inf for y <= 0."""
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, np.inf)
        pos = y > 0.0
        if self.kind == "power":
            g = self.gamma
            # closed form: (1-g) * (y/g)**(g/(g-1))
            out[pos] = (1.0 - g) * np.power(y[pos] / g, g / (g - 1.0))
        else:
            out[pos] = -np.log(y[pos]) - 1.0
        return out if out.shape else float(out)

    def conjugate_derivative(self, y):
        """V'(y) = -I(y)."""
        i = self.inverse_derivative(y)
        return -i

    def conjugate_second_derivative(self, y):
        """V''(y) = -I'(y); strictly positive (V is strictly convex)."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0.0):
            raise ValueError("conjugate second derivative defined for y > 0")
        if self.kind == "power":
            g = self.gamma
            out = (1.0 / (1.0 - g)) / g * np.power(y / g,
                                                   (2.0 - g) / (g - 1.0))
        else:
            out = 1.0 / (y * y)
        return out if out.shape else float(out)


def power_utility(gamma: float = 0.5) -> UtilityFn:
    return UtilityFn("power", gamma)


def log_utility() -> UtilityFn:
    return UtilityFn("log")


def sqrt_utility() -> UtilityFn:
    """U(x) = sqrt(x), the utility of the boundary-maximizer example."""
    return UtilityFn("power", 0.5)


def check_inada(U: UtilityFn, k: int = 8) -> bool:
    """Numerical sanity check of the Inada conditions."""
    return U.derivative(10.0 ** -k) > 1e3 and U.derivative(10.0 ** k) < 1e-3


def conjugate_by_grid(U: UtilityFn, y: float, lo: float = -12.0,
                      hi: float = 12.0, num: int = 20001) -> float:
    """Brute-force V(y) = max over a log-spaced x grid of U(x) - x y.

    Independent oracle for the closed-form conjugate; not meant to be fast.
    """
    x = np.logspace(lo, hi, num)
    vals = U.value(x) - x * y
    return float(np.max(vals))
