"""LP-backed polyhedral cone calculus.

Houses the endowment cone of strategies with nonnegative terminal wealth,
its polar, price-hyperplane sections and their recession cones, and the
three equivalent arbitrage deciders (interior-of-polar, martingale-witness
LP, trivial section recession cone).

Conventions: a cone in H-form is {z : A z >= 0 row-wise}; an empty A means
the whole space.  V-form generators are split into extreme rays and lines
(the lineality space).  All cones here contain the origin and are closed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .config import DEFAULT_TOL, Tolerances
from .errors import (DimensionError, NoMartingaleMeasureError,
                     ReplicableClaimError, SolverError, ValidationError)
from .market import FiniteMarket

_RAY_TOL = 1e-9


# ---------------------------------------------------------------------------
# H-form / V-form plumbing
# ---------------------------------------------------------------------------

def _normalize_rows(A: np.ndarray, tol: float = _RAY_TOL) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return A.reshape(0, A.shape[1] if A.ndim == 2 else 0)
    norms = np.linalg.norm(A, axis=1)
    keep = norms > tol
    return A[keep] / norms[keep, None]


def _dedupe_rows(A: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    out: list[np.ndarray] = []
    for row in A:
        if not any(np.linalg.norm(row - r) < tol for r in out):
            out.append(row)
    return np.array(out) if out else A.reshape(0, A.shape[1])


def _drop_redundant(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Remove halfspaces implied by the others (LP check on the unit box)."""
    A = np.atleast_2d(A)
    if A.shape[0] <= 1:
        return A
    keep = list(range(A.shape[0]))
    i = 0
    while i < len(keep):
        others = [k for k in keep if k != keep[i]]
        if not others:
            break
        row = A[keep[i]]
        res = linprog(row, A_ub=-A[others], b_ub=np.zeros(len(others)),
                      bounds=[(-1.0, 1.0)] * A.shape[1], method="highs")
        if res.status == 0 and res.fun >= -tol:
            keep.pop(i)
        else:
            i += 1
    return A[keep]


def canonical_halfspaces(A: np.ndarray, dim: int) -> np.ndarray:
    """Normalized, deduplicated, irredundant, lexicographically sorted rows."""
    A = _normalize_rows(np.atleast_2d(np.asarray(A, dtype=float)))
    if A.size == 0:
        return np.zeros((0, dim))
    A = _dedupe_rows(A)
    A = _drop_redundant(A)
    order = np.lexsort(np.round(A, 9).T[::-1])
    return A[order]


def generators_from_halfspaces(A: np.ndarray, dim: int,
                               tol: float = _RAY_TOL):
    """Double description: extreme rays and lineality of {z : A z >= 0}.

    Returns (rays, lines) as arrays of unit vectors.  Sized for the small
    systems this library produces (dim <= 5, a handful of halfspaces).
    """
    lines = [np.eye(dim)[i] for i in range(dim)]
    rays: list[np.ndarray] = []
    processed: list[np.ndarray] = []
    A = _normalize_rows(np.atleast_2d(np.asarray(A, dtype=float)))
    for a in A:
        cut = None
        for i, l in enumerate(lines):
            if abs(a @ l) > tol:
                cut = i
                break
        if cut is not None:
            l0 = lines.pop(cut)
            if a @ l0 < 0:
                l0 = -l0
            al0 = a @ l0
            lines = [l - (a @ l) / al0 * l0 for l in lines]
            rays = [r - (a @ r) / al0 * l0 for r in rays]
            rays.append(l0)
            rays = [r / np.linalg.norm(r) for r in rays
                    if np.linalg.norm(r) > tol]
            processed.append(a)
            continue
        vals = [a @ r for r in rays]
        pos = [(r, v) for r, v in zip(rays, vals) if v > tol]
        neg = [(r, v) for r, v in zip(rays, vals) if v < -tol]
        zero = [r for r, v in zip(rays, vals) if -tol <= v <= tol]
        new = [r for r, _ in pos] + zero
        for rp, vp in pos:
            for rn, vn in neg:
                comb = vp * rn - vn * rp
                nrm = np.linalg.norm(comb)
                if nrm > tol:
                    new.append(comb / nrm)
        processed.append(a)
        rays = _extreme_filter(new, processed, lines, dim, tol)
    rays = _dedupe_rows(np.array(rays) if rays else np.zeros((0, dim)))
    lines_arr = np.array(lines) if lines else np.zeros((0, dim))
    return rays, lines_arr


def _extreme_filter(cands, halfspaces, lines, dim, tol):
    """Keep candidate rays whose active set (plus lineality) has rank dim-1."""
    out = []
    H = np.array(halfspaces)
    L = np.array(lines) if lines else np.zeros((0, dim))
    for r in cands:
        active = H[np.abs(H @ r) <= 10 * tol] if H.size else np.zeros((0, dim))
        M = np.vstack([active, L])
        if M.size == 0:
            rank = 0
        else:
            rank = np.linalg.matrix_rank(M, tol=1e-8)
        if rank >= dim - 1:
            if not any(np.linalg.norm(r - o) < 1e-8 for o in out):
                out.append(r)
    return out


def halfspaces_from_generators(rays: np.ndarray, lines: np.ndarray,
                               dim: int) -> np.ndarray:
    """H-form of cone(rays) + span(lines), via the dual double description."""
    rays = np.atleast_2d(rays) if np.size(rays) else np.zeros((0, dim))
    lines = np.atleast_2d(lines) if np.size(lines) else np.zeros((0, dim))
    # the polar {v : v.r >= 0, v.l = 0} is itself in H-form
    polar_h = np.vstack([rays, lines, -lines])
    prays, plines = generators_from_halfspaces(polar_h, dim)
    return canonical_halfspaces(np.vstack([prays, plines, -plines]), dim)


@dataclass
class PolyCone:
    """A polyhedral convex cone, primarily in H-form, V-form on demand."""

    dim: int
    halfspaces: np.ndarray
    _rays: np.ndarray = field(default=None, repr=False)
    _lines: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.halfspaces, dtype=float))
        if A.size == 0:
            A = np.zeros((0, self.dim))
        if A.shape[1] != self.dim:
            raise DimensionError(
                f"halfspaces have {A.shape[1]} columns, expected {self.dim}")
        self.halfspaces = A

    @classmethod
    def from_generators(cls, rays, lines, dim) -> "PolyCone":
        cone = cls(dim, halfspaces_from_generators(
            np.asarray(rays, dtype=float), np.asarray(lines, dtype=float), dim))
        return cone

    def margins(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.halfspaces.shape[0] == 0:
            return np.zeros(0)
        return self.halfspaces @ z

    def contains(self, z, tol: float = 1e-9) -> bool:
        scale = 1.0 + float(np.linalg.norm(np.asarray(z, dtype=float)))
        m = self.margins(z)
        return bool(m.size == 0 or np.min(m) >= -tol * scale)

    def interior_contains(self, z, margin: float = 1e-9) -> bool:
        scale = 1.0 + float(np.linalg.norm(np.asarray(z, dtype=float)))
        m = self.margins(z)
        return bool(m.size == 0 or np.min(m) > margin * scale)

    def generators(self):
        if self._rays is None:
            self._rays, self._lines = generators_from_halfspaces(
                self.halfspaces, self.dim)
        return self._rays, self._lines

    def is_trivial(self, tol: float = 1e-9) -> bool:
        """True iff the cone is {0}; decided by 2*dim bounded LPs."""
        A = self.halfspaces
        for j in range(self.dim):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[j] = -sign
                res = linprog(c, A_ub=-A if A.size else None,
                              b_ub=np.zeros(A.shape[0]) if A.size else None,
                              bounds=[(-1.0, 1.0)] * self.dim, method="highs")
                if res.status != 0:
                    raise SolverError(f"triviality LP failed: {res.message}")
                if -res.fun > tol:
                    return False
        return True

    def canonicalized(self) -> "PolyCone":
        return PolyCone(self.dim, canonical_halfspaces(self.halfspaces,
                                                       self.dim))


def polar_cone(K: PolyCone) -> PolyCone:
    """The cone of vectors with nonnegative inner product against all of K."""
    rays, lines = K.generators()
    h = np.vstack([rays, lines, -lines]) if (rays.size or lines.size) \
        else np.zeros((0, K.dim))
    return PolyCone(K.dim, canonical_halfspaces(h, K.dim))


# ---------------------------------------------------------------------------
# Fourier-Motzkin elimination and the endowment cone
# ---------------------------------------------------------------------------

def fourier_motzkin_eliminate(A: np.ndarray, col: int,
                              tol: float = 1e-11) -> np.ndarray:
    """Project the cone {z : A z >= 0} along coordinate `col`."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    zero = A[np.abs(A[:, col]) <= tol]
    pos = A[A[:, col] > tol]
    neg = A[A[:, col] < -tol]
    combined = []
    for p in pos:
        for q in neg:
            combined.append(p * (-q[col]) + q * p[col])
    rows = [np.delete(r, col) for r in zero]
    rows += [np.delete(r, col) for r in combined]
    if not rows:
        return np.zeros((0, A.shape[1] - 1))
    out = _dedupe_rows(_normalize_rows(np.array(rows)))
    return out


def build_Kbar(mkt: FiniteMarket, tol: Tolerances = DEFAULT_TOL) -> PolyCone:
    """Endowment cone {(x, q) : some strategy gives nonnegative wealth}.

    Obtained by eliminating the strategy coordinates from the per-state
    wealth inequalities.  The result always contains (1, 0) in its interior.
    """
    m, d, n = mkt.m, mkt.d, mkt.n
    # variables (x, q, H); one inequality per state
    A = np.hstack([np.ones((m, 1)), mkt.claim_payoffs, mkt.stock_increments])
    for _ in range(d):
        A = fourier_motzkin_eliminate(A, A.shape[1] - 1)
    K = PolyCone(n + 1, canonical_halfspaces(A, n + 1))
    if not K.interior_contains(np.concatenate(([1.0], np.zeros(n)))):
        raise SolverError("endowment cone lost (1, 0) from its interior")
    return K


def section_recession_cone(K: PolyCone, p) -> PolyCone:
    """K intersected with the hyperplane orthogonal to (1, p).

    This is the recession cone of every nonempty section of K at price
    system (1, p); it is trivial iff those sections are bounded.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[0] != K.dim - 1:
        raise DimensionError("price vector does not match cone dimension")
    v = np.concatenate(([1.0], p))
    v = v / np.linalg.norm(v)
    h = np.vstack([K.halfspaces, v, -v])
    return PolyCone(K.dim, h)


# ---------------------------------------------------------------------------
# Martingale measures and arbitrage deciders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MartingaleWitness:
    """An equivalent martingale measure certifying an arbitrage-free price."""

    q_measure: np.ndarray
    min_mass: float


@dataclass(frozen=True)
class ArbitrageCertificate:
    """A nonzero endowment in the cone, orthogonal to the price system."""

    x: float
    q: np.ndarray


def _max_min_mass(mkt: FiniteMarket, price=None):
    """LP: maximize the minimal mass of a martingale measure.

    With `price` given, additionally pins E_Q of every claim to it.
    Returns (delta_star, q_measure) or (None, None) when infeasible.
    """
    m = mkt.m
    # variables: q (m), delta
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])   # delta - q_w <= 0
    b_ub = np.zeros(m)
    rows = [np.concatenate([np.ones(m), [0.0]])]
    rhs = [1.0]
    for i in range(mkt.d):
        rows.append(np.concatenate([mkt.stock_increments[:, i], [0.0]]))
        rhs.append(0.0)
    if price is not None:
        price = np.atleast_1d(np.asarray(price, dtype=float))
        for j in range(mkt.n):
            rows.append(np.concatenate([mkt.claim_payoffs[:, j], [0.0]]))
            rhs.append(price[j])
    bounds = [(0.0, 1.0)] * m + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=np.array(rows),
                  b_eq=np.array(rhs), bounds=bounds, method="highs")
    if res.status == 2:
        return None, None
    if res.status != 0:
        raise SolverError(f"martingale LP failed: {res.message}")
    return float(-res.fun), res.x[:m]


def _separating_certificate(mkt: FiniteMarket, p,
                            tol: float = 1e-7) -> ArbitrageCertificate:
    """Find a nonzero (x, q) in the endowment cone orthogonal to (1, p)."""
    m, d, n = mkt.m, mkt.d, mkt.n
    p = np.atleast_1d(np.asarray(p, dtype=float))
    # variables: x, q (n), H (d)
    A_ub = -np.hstack([np.ones((m, 1)), mkt.claim_payoffs,
                       mkt.stock_increments])
    b_ub = np.zeros(m)
    A_eq = np.concatenate([[1.0], p, np.zeros(d)])[None, :]
    b_eq = np.array([0.0])
    bounds = [(-1.0, 1.0)] * (1 + n) + [(None, None)] * d
    for j in range(1 + n):
        for sign in (1.0, -1.0):
            c = np.zeros(1 + n + d)
            c[j] = -sign
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                          bounds=bounds, method="highs")
            if res.status == 0 and -res.fun > tol:
                return ArbitrageCertificate(float(res.x[0]),
                                            res.x[1:1 + n].copy())
    raise SolverError("no separating certificate found despite failed "
                      "martingale LP")


def is_arbitrage_free(mkt: FiniteMarket, p, tol: Tolerances = DEFAULT_TOL):
    """Martingale-witness decider.

    Returns (True, MartingaleWitness) when a strictly positive martingale
    measure prices every claim at p, else (False, ArbitrageCertificate).
    """
    delta, q = _max_min_mass(mkt, p)
    if delta is not None and delta > tol.strict_positivity:
        return True, MartingaleWitness(q, delta)
    return False, _separating_certificate(mkt, p)


def has_martingale_measure(mkt: FiniteMarket,
                           tol: Tolerances = DEFAULT_TOL) -> bool:
    delta, _ = _max_min_mass(mkt)
    return delta is not None and delta > tol.strict_positivity


def is_replicable(mkt: FiniteMarket, j: int, tol: float = 1e-9) -> bool:
    """True iff claim j equals cash plus a stock portfolio in every state."""
    target = mkt.claim_payoffs[:, j]
    basis = np.hstack([np.ones((mkt.m, 1)), mkt.stock_increments])
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = basis @ coef - target
    scale = 1.0 + float(np.max(np.abs(target)))
    return bool(np.max(np.abs(resid)) <= tol * scale)


# ---------------------------------------------------------------------------
# Price sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriceSet:
    """For one claim an interval with endpoint flags; else an H-polytope."""

    n: int
    lo: float = None
    hi: float = None
    lo_closed: bool = False
    hi_closed: bool = False
    polytope: tuple = None     # (A, b) with {p : A p <= b}, n >= 2
    empty: bool = False

    def contains(self, p, band: float = 0.0) -> bool:
        if self.empty:
            return False
        if self.n == 1:
            p = float(np.atleast_1d(p)[0])
            above = p > self.lo + band or (self.lo_closed and p >= self.lo - band)
            below = p < self.hi - band or (self.hi_closed and p <= self.hi + band)
            return above and below
        A, b = self.polytope
        return bool(np.all(A @ np.asarray(p, dtype=float) <= b + band))

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _martingale_vertices(mkt: FiniteMarket, tol: float = 1e-10) -> np.ndarray:
    """Vertices of the (closed) martingale polytope by basic solutions."""
    m = mkt.m
    A = np.vstack([np.ones(m), mkt.stock_increments.T])
    b = np.concatenate([[1.0], np.zeros(mkt.d)])
    k = np.linalg.matrix_rank(A)
    verts = []
    for support in combinations(range(m), k):
        sub = A[:, support]
        if np.linalg.matrix_rank(sub) < k:
            continue
        sol, res, *_ = np.linalg.lstsq(sub, b, rcond=None)
        full = np.zeros(m)
        full[list(support)] = sol
        if np.all(full >= -tol) and np.allclose(A @ full, b, atol=1e-8):
            if not any(np.linalg.norm(full - v) < 1e-8 for v in verts):
                verts.append(np.clip(full, 0.0, None))
    return np.array(verts)


def afp_set(mkt: FiniteMarket, tol: Tolerances = DEFAULT_TOL) -> PriceSet:
    """The set of arbitrage-free prices.

    For one claim, the open interval of expectations of the payoff under
    equivalent martingale measures, found by two LPs over the closed
    martingale polytope; endpoints are open for non-replicable claims.
    """
    if not has_martingale_measure(mkt, tol):
        raise NoMartingaleMeasureError(
            "the stock market admits arbitrage: no equivalent martingale "
            "measure exists")
    for j in range(mkt.n):
        if is_replicable(mkt, j):
            raise ReplicableClaimError(
                f"claim {j} is replicable; its price is pinned and the "
                "arbitrage-free set degenerates")
    m = mkt.m
    A_eq = [np.ones(m)]
    b_eq = [1.0]
    for i in range(mkt.d):
        A_eq.append(mkt.stock_increments[:, i])
        b_eq.append(0.0)
    A_eq, b_eq = np.array(A_eq), np.array(b_eq)
    bounds = [(0.0, 1.0)] * m
    if mkt.n == 1:
        f = mkt.claim_payoffs[:, 0]
        out = []
        for c in (f, -f):
            res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                          method="highs")
            if res.status != 0:
                raise SolverError(f"price-bound LP failed: {res.message}")
            out.append(res.fun)
        lo, hi = out[0], -out[1]
        return PriceSet(1, lo=float(lo), hi=float(hi),
                        lo_closed=False, hi_closed=False)
    if mkt.n > 3:
        raise DimensionError("polytope output supported for n <= 3 only")
    verts = _martingale_vertices(mkt)
    prices = verts @ mkt.claim_payoffs
    from scipy.spatial import ConvexHull
    hull = ConvexHull(prices, qhull_options="QJ")
    A = hull.equations[:, :-1]
    b = -hull.equations[:, -1]
    return PriceSet(mkt.n, polytope=(A, b))


def afp_interval_from_cone(K: PolyCone) -> PriceSet:
    """Interior-of-polar arbitrage-free interval for a single claim.

    (1, p) lies in the interior of the polar iff its inner product with
    every extreme ray of K is strictly positive, which for n = 1 pins p
    to an open interval.
    """
    if K.dim != 2:
        raise DimensionError("cone-based interval needs a single claim")
    rays, lines = K.generators()
    if lines.size:
        raise ValidationError("endowment cone contains a line; claim is "
                              "replicable")
    lo, hi = -np.inf, np.inf
    for gx, gq in rays:
        if gq > _RAY_TOL:
            lo = max(lo, -gx / gq)
        elif gq < -_RAY_TOL:
            hi = min(hi, gx / (-gq))
    return PriceSet(1, lo=float(lo), hi=float(hi),
                    lo_closed=False, hi_closed=False)


def price_in_polar_interior(K: PolyCone, p, margin: float = 1e-9) -> bool:
    """Interior-of-polar decider: (1, p) . g > 0 for every extreme ray g."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    v = np.concatenate(([1.0], p))
    rays, lines = K.generators()
    if lines.size and np.max(np.abs(lines @ v)) > margin:
        return False
    if lines.size:
        return False  # polar has empty interior when K contains a line
    if rays.size == 0:
        return False
    return bool(np.min(rays @ v) > margin * np.linalg.norm(v))
