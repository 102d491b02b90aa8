"""Continuous-claim models given by a payoff density on a compact interval.

The claim pays its underlying value s, distributed with density
c * rho(s) on [lo, hi]; there are no stocks, so terminal wealth of the
endowment (x, q) is x + q*s.  Expectations are Gauss-Legendre sums; a
square-root substitution is available near an endpoint where the integrand
has a half-power singularity (wealth hitting zero at the edge of the cone).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad as _adaptive_quad

from .errors import NumericalError, ValidationError

#: named densities usable from instance files and the CLI
DENSITY_REGISTRY: dict[str, tuple[Callable, float, float]] = {
    # payoff density of the boundary-maximizer example
    "sec4": (lambda s: (s + 1.0) ** 1.5, -1.0, 1.0),
    # negative control: wrong exponent, breaks the derivative identity
    "sec4_corrupted": (lambda s: (s + 1.0) ** 0.5, -1.0, 1.0),
    "uniform": (lambda s: np.ones_like(np.asarray(s, dtype=float)), -1.0, 1.0),
}


def normalizer_for(density: Callable, lo: float, hi: float) -> float:
    """1 / integral of the density, by adaptive Gauss-Kronrod quadrature."""
    total, err = _adaptive_quad(density, lo, hi, epsabs=1e-13, epsrel=1e-12,
                                limit=200)
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalError(f"density integrates to {total}, expected > 0")
    return 1.0 / total


@dataclass(frozen=True)
class DensityClaimModel:
    density: Callable          # rho(s), nonnegative on [lo, hi]
    lo: float
    hi: float
    quad_nodes: int = 200
    normalizer: float = None   # c with c * integral(rho) == 1

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValidationError("support interval must be nondegenerate")
        if self.quad_nodes < 2:
            raise ValidationError("need at least 2 quadrature nodes")
        if self.normalizer is None:
            object.__setattr__(self, "normalizer",
                               normalizer_for(self.density, self.lo, self.hi))
        if self.normalizer <= 0.0:
            raise ValidationError("normalizer must be positive")
        nodes, weights = np.polynomial.legendre.leggauss(self.quad_nodes)
        half = 0.5 * (self.hi - self.lo)
        mid = 0.5 * (self.hi + self.lo)
        s = mid + half * nodes
        rho = np.asarray(self.density(s), dtype=float)
        if np.any(rho < -1e-12):
            raise ValidationError("density is negative on the support")
        object.__setattr__(self, "_nodes", s)
        object.__setattr__(self, "_weights",
                           half * weights * rho * self.normalizer)

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights already folded with c * rho."""
        return self._weights


def density_model(name: str, quad_nodes: int = 200) -> DensityClaimModel:
    if name not in DENSITY_REGISTRY:
        raise ValidationError(
            f"unknown density {name!r}; known: {sorted(DENSITY_REGISTRY)}")
    rho, lo, hi = DENSITY_REGISTRY[name]
    return DensityClaimModel(rho, lo, hi, quad_nodes)


def quad_expectation(model: DensityClaimModel, g: Callable) -> float:
    """c * integral of g(s) rho(s) ds by Gauss-Legendre with model.quad_nodes."""
    vals = np.asarray(g(model.nodes), dtype=float)
    if np.any(np.isnan(vals)):
        raise NumericalError("integrand evaluated to NaN at a quadrature node")
    return float(model.weights @ vals)


def quad_expectation_refined(model: DensityClaimModel, g: Callable,
                             singular_end: str) -> float:
    """Like quad_expectation but with a sqrt substitution at one endpoint.

    singular_end is "lo" or "hi".  Substituting s = end +/- t**2 removes a
    half-power singularity of g at that endpoint, which plain Gauss-Legendre
    resolves poorly when the singular point sits on (or just outside) the
    support boundary.
    """
    n = model.quad_nodes
    t_nodes, t_weights = np.polynomial.legendre.leggauss(n)
    width = model.hi - model.lo
    tmax = np.sqrt(width)
    t = 0.5 * tmax * (t_nodes + 1.0)
    w = 0.5 * tmax * t_weights
    if singular_end == "lo":
        s = model.lo + t ** 2
    elif singular_end == "hi":
        s = model.hi - t ** 2
    else:
        raise ValueError("singular_end must be 'lo' or 'hi'")
    s = np.clip(s, model.lo, model.hi)
    rho = np.asarray(model.density(s), dtype=float)
    vals = np.asarray(g(s), dtype=float)
    if np.any(np.isnan(vals)):
        raise NumericalError("integrand evaluated to NaN at a quadrature node")
    # ds = 2 t dt
    return float(np.sum(w * 2.0 * t * rho * vals) * model.normalizer)
