"""One-period finite-state market model.

A market has m states with strictly positive physical probabilities, d stocks
described by their per-state price increments (zero interest normalization),
and n non-traded claims described by their per-state payoffs.  A trading
strategy is a vector H in R^d and the terminal wealth of the endowment
(x, q) under H is  x + H . increments[w] + q . payoffs[w]  in state w.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import ParseError, ValidationError
from .utility import UtilityFn


@dataclass(frozen=True)
class FiniteMarket:
    states: tuple
    probs: np.ndarray             # (m,) strictly positive, sums to 1
    stock_increments: np.ndarray  # (m, d)
    claim_payoffs: np.ndarray     # (m, n)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        delta = np.atleast_2d(np.asarray(self.stock_increments, dtype=float))
        payoff = np.atleast_2d(np.asarray(self.claim_payoffs, dtype=float))
        m = probs.shape[0]
        if m < 1:
            raise ValidationError("need at least one state")
        if delta.size == 0:
            delta = delta.reshape(m, 0)
        if delta.shape[0] != m or payoff.shape[0] != m:
            raise ValidationError(
                f"state dimension mismatch: probs {m}, increments "
                f"{delta.shape[0]}, payoffs {payoff.shape[0]}")
        if payoff.shape[1] < 1:
            raise ValidationError("need at least one claim")
        if len(self.states) != m:
            raise ValidationError("state labels do not match probs length")
        if not np.all(np.isfinite(probs)) or not np.all(np.isfinite(delta)) \
                or not np.all(np.isfinite(payoff)):
            raise ValidationError("market data contains NaN or Inf")
        if np.any(probs <= 0.0):
            raise ValidationError("probabilities must be strictly positive")
        s = probs.sum()
        if abs(s - 1.0) > DEFAULT_TOL.prob_sum:
            raise ValidationError(f"probabilities sum to {s}, not 1")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "probs", probs / s)
        object.__setattr__(self, "stock_increments", delta)
        object.__setattr__(self, "claim_payoffs", payoff)
        self.probs.setflags(write=False)
        self.stock_increments.setflags(write=False)
        self.claim_payoffs.setflags(write=False)

    @property
    def m(self) -> int:
        return self.probs.shape[0]

    @property
    def d(self) -> int:
        return self.stock_increments.shape[1]

    @property
    def n(self) -> int:
        return self.claim_payoffs.shape[1]

    def wealth(self, x: float, q, H=None) -> np.ndarray:
        """Per-state terminal wealth of endowment (x, q) under strategy H."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        w = x + self.claim_payoffs @ q
        if self.d:
            H = np.zeros(self.d) if H is None else np.asarray(H, dtype=float)
            w = w + self.stock_increments @ H
        return w


@dataclass(frozen=True)
class Endowment:
    """Cash x plus a quantity vector q of non-traded claims."""

    x: float
    q: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if not np.isfinite(self.x) or not np.all(np.isfinite(q)):
            raise ValidationError("endowment entries must be finite")
        object.__setattr__(self, "q", q)
        self.q.setflags(write=False)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.x], self.q))

    def __add__(self, other: "Endowment") -> "Endowment":
        return Endowment(self.x + other.x, self.q + other.q)


def endowment(x: float, q) -> Endowment:
    """Convenience constructor accepting a scalar q for single-claim markets."""
    return Endowment(float(x), np.atleast_1d(np.asarray(q, dtype=float)))


def load_market(path) -> FiniteMarket:
    """Load and validate a market instance file (JSON, see README schema)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    for key in ("states", "probs", "stock_increments", "claim_payoffs"):
        if key not in raw:
            raise ParseError(f"{path} misses required key {key!r}")
    try:
        probs = np.asarray(raw["probs"], dtype=float)
        delta = np.asarray(raw["stock_increments"], dtype=float)
        payoff = np.asarray(raw["claim_payoffs"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: non-numeric entries: {exc}") from exc
    if delta.ndim == 1:
        # allow [[], [], ...] style empty increments
        delta = delta.reshape(len(probs), 0)
    return FiniteMarket(tuple(raw["states"]), probs, delta, payoff)


def expected_utility(mkt: FiniteMarket, U: UtilityFn, wealth) -> float:
    """E[U(wealth)] under the physical measure, with the -inf convention.

    Returns -inf as soon as one state has negative wealth, or zero wealth
    with U(0) = -inf; probabilities are strictly positive so "P-a.s." is
    "in every state".
    """
    wealth = np.asarray(wealth, dtype=float)
    if wealth.shape != (mkt.m,):
        raise ValidationError(f"wealth must have length {mkt.m}")
    if np.any(wealth < 0.0):
        return -np.inf
    vals = U.value(wealth)
    if np.any(np.isneginf(vals)):
        return -np.inf
    return float(mkt.probs @ vals)


def two_state_market(hi: float = 1.0, lo: float = -1.0,
                     p_hi: float = 0.5) -> FiniteMarket:
    """The minimal non-replicable instance: two states, no stocks, one claim."""
    return FiniteMarket(("up", "down"), np.array([p_hi, 1.0 - p_hi]),
                        np.zeros((2, 0)), np.array([[hi], [lo]]))
