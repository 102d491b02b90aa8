"""Maximal expected utility and its dual value functions.

value_u maximizes expected utility over trading strategies for a finite
market; value_u_density handles the stock-less continuous-claim model.
The dual side realizes the conjugate pair: w(x) is optimal investment
without the claims and wtilde(y) minimizes the expected conjugate over
martingale densities, so that w(x) = inf_y (wtilde(y) + x y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

from .config import DEFAULT_TOL, Tolerances
from .cones import (PolyCone, afp_interval_from_cone, afp_set, build_Kbar,
                    canonical_halfspaces, is_arbitrage_free,
                    price_in_polar_interior, _martingale_vertices,
                    _max_min_mass)
from .errors import (NoMartingaleMeasureError, PreconditionError, SolverError,
                     UnboundedError, ValidationError)
from .market import Endowment, FiniteMarket, endowment, expected_utility
from .quadrature import (DensityClaimModel, quad_expectation,
                         quad_expectation_refined)
from .utility import UtilityFn


@dataclass(frozen=True)
class ValueResult:
    """Outcome of one utility maximization."""

    value: float
    optimal_strategy: np.ndarray = None   # absent when value = -inf
    optimal_wealth: np.ndarray = None
    multiplier: float = None              # y = du/dx when it exists


@dataclass(frozen=True)
class DualValues:
    w_of_x: float
    wtilde_of_y: float


# ---------------------------------------------------------------------------
# Primal: concave maximization over strategies
# ---------------------------------------------------------------------------

def _max_min_wealth(mkt: FiniteMarket, base: np.ndarray, cap: float = 1e9):
    """LP: maximize the minimal per-state wealth over strategies.

    Returns (s_star, H_star).  The cap keeps the LP bounded when the stock
    market itself admits arbitrage (caller turns that into UnboundedError).
    """
    m, d = mkt.m, mkt.d
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-mkt.stock_increments, np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=base,
                  bounds=[(None, None)] * d + [(None, cap)], method="highs")
    if res.status != 0:
        raise SolverError(f"max-min wealth LP failed: {res.message}")
    return float(res.x[-1]), res.x[:-1]


def _newton_concave(objective, x0, feasible, max_iter=200):
    """Damped Newton ascent for a smooth strictly concave objective.

    objective(x) -> (value, grad, hess); feasible(x) -> bool guards the
    domain.  Returns (x, value, grad_norm).
    """
    x = np.asarray(x0, dtype=float)
    val, grad, hess = objective(x)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= 1e-11 * (1.0 + abs(val)):
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess + 1e-12 * np.eye(len(x)), grad,
                                   rcond=None)[0]
        decrement = float(grad @ step)
        if decrement <= 1e-18 * (1.0 + abs(val)):
            break
        t = 1.0
        for _ in range(80):
            cand = x + t * step
            if feasible(cand):
                cval, cgrad, chess = objective(cand)
                if cval >= val + 1e-4 * t * decrement:
                    x, val, grad, hess = cand, cval, cgrad, chess
                    break
            t *= 0.5
        else:
            break
        if np.linalg.norm(x) > 1e9:
            raise UnboundedError("strategy norm diverged during ascent")
    return x, val, float(np.linalg.norm(grad))


def _ascend_strategies(mkt, U, base, H0, margin):
    """Interior Newton over the row space of the increment matrix."""
    m, d = mkt.m, mkt.d
    _, sv, Vt = np.linalg.svd(mkt.stock_increments, full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 0.0)))
    if rank == 0:
        return np.zeros(d), base
    V = Vt[:rank].T                       # d x r
    M = mkt.stock_increments @ V          # m x r
    probs = mkt.probs

    def obj(xi):
        w = base + M @ xi
        val = float(probs @ U.value(w))
        du = probs * U.derivative(w)
        d2u = probs * U.second_derivative(w)
        return val, M.T @ du, M.T @ (d2u[:, None] * M)

    def feas(xi):
        return bool(np.min(base + M @ xi) > margin)

    xi0 = np.linalg.lstsq(V, H0, rcond=None)[0]
    if not feas(xi0):
        xi0 = 0.999 * xi0 if feas(0.999 * xi0) else xi0
    xi, _, _ = _newton_concave(obj, xi0, feas)
    H = V @ xi
    return H, base + mkt.stock_increments @ H


def _forced_zero_states(mkt, base, eq, ftol):
    """States whose wealth is pinned to zero on the current face."""
    m, d = mkt.m, mkt.d
    delta = mkt.stock_increments
    A_eq = delta[eq] if eq else None
    b_eq = -base[eq] if eq else None
    forced = list(eq)
    for w in range(m):
        if w in forced:
            continue
        res = linprog(-delta[w], A_ub=-delta, b_ub=base,
                      A_eq=A_eq, b_eq=b_eq,
                      bounds=[(None, None)] * d, method="highs")
        if res.status == 3:
            continue   # wealth unbounded above in this state: not pinned
        if res.status != 0:
            raise SolverError(f"face LP failed: {res.message}")
        if -res.fun + base[w] <= ftol:
            forced.append(w)
    return sorted(forced)


def _solve_power_boundary(mkt, U, base, tol: Tolerances):
    """Maximize power utility when every strategy pins some state at zero."""
    scale = 1.0 + float(np.max(np.abs(base)))
    ftol = tol.feasibility * scale
    eq: list[int] = []
    while True:
        new_eq = _forced_zero_states(mkt, base, eq, ftol)
        if new_eq == eq:
            break
        eq = new_eq
    rest = [w for w in range(mkt.m) if w not in eq]
    delta = mkt.stock_increments
    if not rest:
        H = np.linalg.lstsq(delta[eq], -base[eq], rcond=None)[0]
        return ValueResult(0.0, H, np.zeros(mkt.m), None)
    # affine hull of the face: delta[eq] H = -base[eq]
    if eq:
        Hp = np.linalg.lstsq(delta[eq], -base[eq], rcond=None)[0]
        _, sv, Vt = np.linalg.svd(delta[eq], full_matrices=True)
        nnull = delta.shape[1] - int(np.sum(sv > 1e-10 * max(1.0, sv[0])))
        N = Vt[delta.shape[1] - nnull:].T if nnull else np.zeros((mkt.d, 0))
    else:
        Hp = np.zeros(mkt.d)
        N = np.eye(mkt.d)
    base_rest = base[rest] + delta[rest] @ Hp
    probs = mkt.probs[rest]
    M = delta[rest] @ N
    if M.size == 0 or M.shape[1] == 0:
        wealth = np.zeros(mkt.m)
        wealth[rest] = np.clip(base_rest, 0.0, None)
        val = float(probs @ U.value(np.clip(base_rest, 1e-300, None))
                    ) if np.all(base_rest > 0) else \
            float(probs @ U.value(np.clip(base_rest, 0.0, None)))
        return ValueResult(val, Hp, wealth, None)

    def obj(xi):
        w = base_rest + M @ xi
        val = float(probs @ U.value(w))
        du = probs * U.derivative(w)
        d2u = probs * U.second_derivative(w)
        return val, M.T @ du, M.T @ (d2u[:, None] * M)

    def feas(xi):
        return bool(np.min(base_rest + M @ xi) > tol.newton_margin * scale)

    # strictly face-interior start from a max-min LP on the face
    m_r, k = M.shape
    c = np.zeros(k + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([-M, np.ones((m_r, 1))]), b_ub=base_rest,
                  bounds=[(None, None)] * k + [(None, 1e9)], method="highs")
    if res.status != 0:
        raise SolverError(f"face interior LP failed: {res.message}")
    xi0 = res.x[:-1]
    if not feas(xi0):
        # face still pins a remaining state: give up on strict interiority
        xi0 = np.zeros(k)
        if not feas(xi0):
            wealth = np.zeros(mkt.m)
            wr = np.clip(base_rest, 0.0, None)
            wealth[rest] = wr
            return ValueResult(float(probs @ U.value(wr)), Hp, wealth, None)
    xi, val, _ = _newton_concave(obj, xi0, feas)
    H = Hp + N @ xi
    wealth = np.zeros(mkt.m)
    wealth[rest] = base_rest + M @ xi
    return ValueResult(val, H, wealth, None)


def value_u(mkt: FiniteMarket, U: UtilityFn, e: Endowment,
            tol: Tolerances = DEFAULT_TOL, h0=None) -> ValueResult:
    """sup over strategies of expected utility of terminal wealth.

    -inf outside the endowment cone, and at its boundary for utilities with
    U(0) = -inf.  h0 is an optional warm-start strategy; when it is already
    strictly feasible the feasibility LP is skipped.
    """
    if e.n != mkt.n:
        raise ValidationError("endowment does not match number of claims")
    base = mkt.wealth(e.x, e.q)
    scale = 1.0 + abs(e.x) + float(np.linalg.norm(e.q)) + \
        float(np.max(np.abs(base)))
    if mkt.d == 0:
        if np.min(base) < -tol.feasibility * scale:
            return ValueResult(-np.inf)
        wealth = np.clip(base, 0.0, None)
        val = expected_utility(mkt, U, wealth)
        if not np.isfinite(val):
            return ValueResult(-np.inf)
        y = float(mkt.probs @ U.derivative(base)) if np.min(base) > 0 else None
        return ValueResult(val, np.zeros(0), wealth, y)

    if h0 is not None:
        h0 = np.asarray(h0, dtype=float)
        if np.min(base + mkt.stock_increments @ h0) > tol.feasibility * scale:
            H, wealth = _ascend_strategies(mkt, U, base, h0,
                                           tol.newton_margin * scale)
            val = float(mkt.probs @ U.value(wealth))
            y = float(mkt.probs @ U.derivative(wealth))
            return ValueResult(val, H, wealth, y)

    s_star, H_star = _max_min_wealth(mkt, base)
    if s_star >= 1e8:
        raise UnboundedError("stock market admits arbitrage; utility "
                             "maximization is unbounded")
    if s_star < -tol.feasibility * scale:
        return ValueResult(-np.inf)
    if s_star <= tol.feasibility * scale:
        if U.kind == "log":
            return ValueResult(-np.inf)
        return _solve_power_boundary(mkt, U, base, tol)
    H, wealth = _ascend_strategies(mkt, U, base, H_star,
                                   tol.newton_margin * scale)
    val = float(mkt.probs @ U.value(wealth))
    y = float(mkt.probs @ U.derivative(wealth))
    return ValueResult(val, H, wealth, y)


# ---------------------------------------------------------------------------
# Density model: no stocks, continuous claim
# ---------------------------------------------------------------------------

def density_integral(model: DensityClaimModel, x: float, q: float,
                     fn_of_s, boundary_frac: float = 0.05) -> float:
    """c * integral of fn_of_s(s) rho(s) ds for an integrand built from the
    wealth x + q s; switches to the sqrt substitution when the wealth zero
    sits near a support endpoint."""
    w_lo = x + q * model.lo
    w_hi = x + q * model.hi
    span = abs(q) * (model.hi - model.lo)
    if span > 0 and min(w_lo, w_hi) <= boundary_frac * span:
        end = "lo" if w_lo <= w_hi else "hi"
        return quad_expectation_refined(model, fn_of_s, end)
    return quad_expectation(model, fn_of_s)


def value_u_density(model: DensityClaimModel, U: UtilityFn,
                    e: Endowment, tol: Tolerances = DEFAULT_TOL) -> ValueResult:
    """Expected utility u(x, q) = c * integral of U(x + q s) rho(s) ds."""
    if e.n != 1:
        raise ValidationError("density model carries a single claim")
    x, q = e.x, float(e.q[0])
    scale = 1.0 + abs(x) + abs(q)
    wmin = min(x + q * model.lo, x + q * model.hi)
    if wmin < -tol.feasibility * scale:
        return ValueResult(-np.inf)
    val = density_integral(model, x, q,
                           lambda s: U.value(np.clip(x + q * s, 0.0, None)))
    if not np.isfinite(val):
        return ValueResult(-np.inf)
    y = None
    if wmin > tol.feasibility * scale:
        y = density_integral(model, x, q,
                             lambda s: U.derivative(x + q * s))
    return ValueResult(float(val), np.zeros(0), None, y)


def density_cone(model: DensityClaimModel) -> PolyCone:
    """Endowment cone of the stock-less continuous-claim model."""
    h = np.array([[1.0, model.lo], [1.0, model.hi]])
    return PolyCone(2, canonical_halfspaces(h, 2))


def density_gradient(model: DensityClaimModel, U: UtilityFn,
                     e: Endowment) -> tuple[float, float]:
    """(u_x, u_q) by differentiating under the integral (interior only)."""
    x, q = e.x, float(e.q[0])
    ux = density_integral(model, x, q, lambda s: U.derivative(x + q * s))
    uq = density_integral(model, x, q, lambda s: s * U.derivative(x + q * s))
    return float(ux), float(uq)


# ---------------------------------------------------------------------------
# Dual: wtilde over the martingale polytope
# ---------------------------------------------------------------------------

def wtilde(mkt: FiniteMarket, U: UtilityFn, y: float,
           tol: Tolerances = DEFAULT_TOL) -> float:
    """min over martingale densities of E[V(y * dQ/dP)].

    Solved by damped Newton in the null space of the martingale constraints;
    the conjugate blows up at zero mass, so the minimum is interior.
    """
    if y <= 0.0:
        raise ValidationError("wtilde defined for y > 0")
    delta0, q0 = _max_min_mass(mkt)
    if delta0 is None or delta0 <= tol.strict_positivity:
        raise NoMartingaleMeasureError("no equivalent martingale measure")
    probs = mkt.probs
    A = np.vstack([np.ones(mkt.m), mkt.stock_increments.T])
    _, sv, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    N = Vt[rank:].T    # m x k null-space basis
    if N.shape[1] == 0:
        return float(probs @ U.conjugate(y * q0 / probs))

    def obj(u):
        q = q0 + N @ u
        dens = y * q / probs
        val = float(probs @ U.conjugate(dens))
        grad_q = y * U.conjugate_derivative(dens)
        hess_q = (y * y / probs) * U.conjugate_second_derivative(dens)
        # minimize: hand the ascent routine the negated problem
        return -val, -(N.T @ grad_q), -(N.T @ (hess_q[:, None] * N))

    def feas(u):
        return bool(np.min(q0 + N @ u) > 1e-14)

    u, negval, _ = _newton_concave(obj, np.zeros(N.shape[1]), feas)
    return -negval


def wtilde_by_vertices(mkt: FiniteMarket, U: UtilityFn, y: float) -> float:
    """Cross-check of wtilde over convex weights on the polytope vertices."""
    verts = _martingale_vertices(mkt)
    if verts.shape[0] == 0:
        raise NoMartingaleMeasureError("martingale polytope is empty")
    probs = mkt.probs
    k = verts.shape[0]

    def f(lam):
        q = lam @ verts
        if np.min(q) <= 0.0:
            return 1e12
        return float(probs @ U.conjugate(y * q / probs))

    x0 = np.full(k, 1.0 / k)
    res = minimize(f, x0, method="SLSQP",
                   bounds=[(0.0, 1.0)] * k,
                   constraints=[{"type": "eq",
                                 "fun": lambda lam: np.sum(lam) - 1.0}],
                   options={"maxiter": 500, "ftol": 1e-14})
    return float(res.fun)


def dual_values(mkt: FiniteMarket, U: UtilityFn, x: float, y: float,
                tol: Tolerances = DEFAULT_TOL) -> DualValues:
    if x <= 0.0 or y <= 0.0:
        raise ValidationError("dual_values requires x > 0 and y > 0")
    w = value_u(mkt, U, endowment(x, np.zeros(mkt.n)), tol).value
    return DualValues(w, wtilde(mkt, U, y, tol))


def conjugate_infimum(mkt: FiniteMarket, U: UtilityFn, x: float,
                      tol: Tolerances = DEFAULT_TOL) -> float:
    """inf over y > 0 of wtilde(y) + x y, bracketed around y = w'(x)."""
    vr = value_u(mkt, U, endowment(x, np.zeros(mkt.n)), tol)
    y0 = vr.multiplier if vr.multiplier else 1.0
    res = minimize_scalar(lambda y: wtilde(mkt, U, y, tol) + x * y,
                          bounds=(y0 / 16.0, y0 * 16.0), method="bounded",
                          options={"xatol": 1e-12 * y0})
    return float(res.fun)


# ---------------------------------------------------------------------------
# Upper semicontinuity probe
# ---------------------------------------------------------------------------

def usc_probe(value_fn, e: Endowment, directions, steps,
              tol_violation: float = 1e-6) -> dict:
    """Compare limsup of u along shrinking steps with u at the base point.

    value_fn maps an Endowment to a float (possibly -inf); directions is a
    list of (dx, dq) vectors; steps a decreasing sequence of positives.
    """
    u0 = value_fn(e)
    report = {"base": [e.x] + list(e.q), "u_base": u0, "directions": []}
    violated = False
    for v in directions:
        v = np.asarray(v, dtype=float)
        vals = []
        for t in steps:
            shifted = Endowment(e.x + t * v[0], e.q + t * v[1:])
            vals.append(value_fn(shifted))
        tail = [val for val in vals[-3:] if np.isfinite(val)]
        limsup = max(tail) if tail else -np.inf
        # usc: limsup along the ray must not exceed u(e); when u(e) = -inf
        # any finite cluster value is a violation
        if np.isfinite(u0):
            flag = limsup > u0 + tol_violation
        else:
            flag = np.isfinite(limsup)
        if flag:
            violated = True
        report["directions"].append({"direction": v.tolist(),
                                     "values": vals, "limsup": limsup,
                                     "violation": flag})
    report["usc_violated"] = violated
    return report


# ---------------------------------------------------------------------------
# Value oracles: one interface over both market kinds
# ---------------------------------------------------------------------------

class MarketOracle:
    """Bundles a finite market with a utility; caches cone and warm starts."""

    def __init__(self, mkt: FiniteMarket, U: UtilityFn,
                 tol: Tolerances = DEFAULT_TOL):
        self.mkt = mkt
        self.U = U
        self.tol = tol
        self._cone = None
        self._warm = None

    @property
    def n(self) -> int:
        return self.mkt.n

    @property
    def cone(self) -> PolyCone:
        if self._cone is None:
            self._cone = build_Kbar(self.mkt, self.tol)
        return self._cone

    def value_result(self, e: Endowment) -> ValueResult:
        res = value_u(self.mkt, self.U, e, self.tol, h0=self._warm)
        if res.optimal_strategy is not None and self.mkt.d:
            self._warm = res.optimal_strategy
        return res

    def value(self, e: Endowment) -> float:
        return self.value_result(e).value

    def gradient(self, e: Endowment):
        """(y, r) = (u_x, u_q) at an interior endowment, from the multiplier."""
        res = self.value_result(e)
        if res.multiplier is None:
            raise PreconditionError("gradient needs an interior endowment")
        du = self.mkt.probs * self.U.derivative(res.optimal_wealth)
        r = du @ self.mkt.claim_payoffs
        return float(res.multiplier), np.atleast_1d(r)

    def afp(self):
        return afp_set(self.mkt, self.tol)

    def price_is_arbitrage_free(self, p) -> bool:
        ok, _ = is_arbitrage_free(self.mkt, p, self.tol)
        return ok


class DensityOracle:
    """Value oracle for the stock-less continuous-claim model."""

    def __init__(self, model: DensityClaimModel, U: UtilityFn,
                 tol: Tolerances = DEFAULT_TOL):
        self.model = model
        self.U = U
        self.tol = tol
        self._cone = density_cone(model)

    n = 1

    @property
    def cone(self) -> PolyCone:
        return self._cone

    def value_result(self, e: Endowment) -> ValueResult:
        return value_u_density(self.model, self.U, e, self.tol)

    def value(self, e: Endowment) -> float:
        return self.value_result(e).value

    def gradient(self, e: Endowment):
        ux, uq = density_gradient(self.model, self.U, e)
        return ux, np.array([uq])

    def afp(self):
        return afp_interval_from_cone(self._cone)

    def price_is_arbitrage_free(self, p) -> bool:
        return price_in_polar_interior(self._cone, p)
