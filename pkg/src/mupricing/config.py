"""Centralized tolerance constants.

All thresholds used by the LP deciders, the concave solvers, and the
verification harnesses live in one frozen record so tests and the CLI can
override them coherently.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9     # LP feasibility / cone membership slack
    optimality: float = 1e-8      # gradient norm target of concave solves
    strict_positivity: float = 1e-9   # minimal mass of an equivalent measure
    prob_sum: float = 1e-9        # allowed drift of sum(probs) before error
    newton_margin: float = 1e-12  # wealth margin kept by damped Newton steps
    marginal_band: float = 1e-7   # slack in the direct marginal-price check
    fd_step: float = 1e-5         # finite-difference step for gradients
    endpoint_band: float = 1e-6   # band around interval endpoints

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT_TOL = Tolerances()
