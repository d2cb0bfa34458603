"""!@file projections.py
@brief Orthogonal projections onto the dictionary constraint sets.
@details Every dictionary-update variant reduces to projecting one column onto a convex set. This module holds
those projections: the l2 ball, its non-negative half, the elastic-net ball (linear-time randomized pivoting) and
the fused-lasso ball, the last one built on a homotopy for the fused lasso signal approximation problem that only
needs cumulative sums and a tridiagonal closed-form inverse.
@version 0.1.0
@date_created 2025-03-20
@date_modified 2025-04-02
@author Leland Green
@license MIT
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from sparse_coding import ConvergenceError

## Two path events closer than this (relative to the path parameter) are treated as simultaneous.
KINK_TOL = 1e-12
## Accepted constraint violation of a closed-form boundary root before falling back to bracketing.
ROOT_TOL = 1e-10


class ConstraintKind(str, Enum):
    """!@brief Column constraint sets supported by the dictionary update."""
    L2_BALL = "l2_ball"
    NONNEG_L2_BALL = "nonneg_l2_ball"
    ELASTIC_NET_BALL = "elastic_net_ball"
    FUSED_LASSO_BALL = "fused_lasso_ball"


@dataclass(frozen=True)
class ConstraintSet:
    """!
    @brief A per-column constraint set, written as value(d) <= radius.
    @details
    - l2_ball:           ||d||^2 <= radius
    - nonneg_l2_ball:    ||d||^2 <= radius and d >= 0
    - elastic_net_ball:  ||d||^2 + gamma ||d||_1 <= radius (optionally d >= 0)
    - fused_lasso_ball:  ||d||^2 + gamma1 ||d||_1 + gamma2 FL(d) <= radius
    """
    kind: ConstraintKind = ConstraintKind.L2_BALL
    gamma: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    radius: float = 1.0
    nonneg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        for name in ("gamma", "gamma1", "gamma2"):
            if getattr(self, name) < 0:
                raise ValueError(f"Constraint parameter {name} must be >= 0, got {getattr(self, name)}.")
        if not self.radius > 0:
            raise ValueError(f"Constraint radius must be > 0, got {self.radius}.")
        if self.kind == ConstraintKind.NONNEG_L2_BALL:
            object.__setattr__(self, "nonneg", True)
        if self.nonneg and self.kind == ConstraintKind.FUSED_LASSO_BALL:
            raise ValueError("The fused-lasso ball has no non-negative variant.")

    def value(self, u) -> float:
        """!@brief Left-hand side of the constraint for one column."""
        u = np.asarray(u, dtype=float)
        sq = float(u @ u)
        if self.kind in (ConstraintKind.L2_BALL, ConstraintKind.NONNEG_L2_BALL):
            return sq
        if self.kind == ConstraintKind.ELASTIC_NET_BALL:
            return sq + self.gamma * float(np.abs(u).sum())
        return sq + self.gamma1 * float(np.abs(u).sum()) + self.gamma2 * fl_value(u)

    def contains(self, u, tol: float = 1e-10) -> bool:
        u = np.asarray(u, dtype=float)
        if self.nonneg and u.size and u.min() < -tol:
            return False
        return self.value(u) <= self.radius + tol

    def project(self, u, seed: int = 0) -> np.ndarray:
        """!
        @brief Euclidean projection of one column onto this set.
        @param u The column to project.
        @param seed Seed of the pivot generator used by the elastic-net projection.
        @return The projected column (a new array).
        """
        norm_radius = np.sqrt(self.radius)
        if self.kind == ConstraintKind.L2_BALL:
            return project_l2_ball(u, norm_radius)
        if self.kind == ConstraintKind.NONNEG_L2_BALL:
            return project_nonneg_l2_ball(u, norm_radius)
        if self.kind == ConstraintKind.ELASTIC_NET_BALL:
            if self.gamma == 0:
                if self.nonneg:
                    return project_nonneg_l2_ball(u, norm_radius)
                return project_l2_ball(u, norm_radius)
            # ||d||^2 + g||d||_1 <= r  <=>  ||d||_1 + (2/g)/2 ||d||^2 <= r/g
            return project_elastic_net(u, 2.0 / self.gamma, self.radius / self.gamma, self.nonneg, seed)
        return project_fused_lasso_set(u, self.gamma1, self.gamma2, self.radius)


@dataclass(frozen=True)
class ProxWeights:
    """!@brief Weights (gamma1, gamma2, gamma3) of the fused lasso signal approximation problem."""
    l1: float = 0.0
    fuse: float = 0.0
    ridge: float = 0.0

    def __post_init__(self):
        for name in ("l1", "fuse", "ridge"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"Proximal weight {name} must be >= 0, got {getattr(self, name)}.")


def _as_vector(u, name="vector") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        u = u.ravel()
    if not np.all(np.isfinite(u)):
        raise ValueError(f"The {name} contains non-finite entries.")
    return u


def soft_threshold(u, t: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def project_l2_ball(u, radius: float = 1.0) -> np.ndarray:
    """!
    @brief Projects onto the l2 ball {||d||_2 <= radius}.
    @return u itself (copied) when inside the ball, u scaled to the sphere otherwise.
    """
    u = _as_vector(u)
    norm = np.linalg.norm(u)
    if norm <= radius:
        return u.copy()
    return u * (radius / norm)


def project_nonneg_l2_ball(u, radius: float = 1.0) -> np.ndarray:
    """!@brief Projects onto {d >= 0, ||d||_2 <= radius}: clip the negative part, then scale."""
    return project_l2_ball(np.maximum(_as_vector(u), 0.0), radius)


def fl_value(u) -> float:
    """!@brief Fused-lasso penalty FL(u): sum of absolute consecutive differences (0 for a single entry)."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("FL is undefined for an empty vector.")
    return float(np.abs(np.diff(u)).sum())


def elastic_net_value(u, gamma: float) -> float:
    """!@brief ||u||_1 + (gamma/2)||u||_2^2, the constraint value used by project_elastic_net."""
    u = np.asarray(u, dtype=float)
    return float(np.abs(u).sum() + 0.5 * gamma * (u @ u))


def fused_lasso_value(u, gamma1: float, gamma2: float) -> float:
    """!@brief ||u||_2^2 + gamma1 ||u||_1 + gamma2 FL(u), the value bounded by the fused-lasso ball."""
    u = np.asarray(u, dtype=float)
    return float(u @ u + gamma1 * np.abs(u).sum() + gamma2 * fl_value(u))


def project_elastic_net(b, gamma: float, tau: float, nonneg: bool = False, seed: int = 0) -> np.ndarray:
    """!
    @brief Projects b onto {u : ||u||_1 + (gamma/2)||u||_2^2 <= tau} in expected linear time.
    @details A randomized pivot partition finds the support S of the solution; the threshold lambda then solves
    a quadratic in closed form and u[j] = sign(b[j]) (|b[j]| - lambda)^+ / (1 + lambda gamma). With nonneg the
    magnitudes |b[j]| are replaced by max(b[j], 0), which also projects onto the non-negative orthant.
    @param b Vector to project.
    @param gamma Weight of the quadratic term, >= 0. Zero gives the l1-ball projection.
    @param tau Radius, > 0.
    @param nonneg Add the constraint u >= 0.
    @param seed Seed of the pivot generator.
    @return The projection of b.
    """
    b = _as_vector(b)
    if not tau > 0:
        raise ValueError(f"Elastic-net radius tau must be > 0, got {tau}.")
    if gamma < 0:
        raise ValueError(f"Elastic-net gamma must be >= 0, got {gamma}.")
    if nonneg:
        b = np.maximum(b, 0.0)
    mags = np.abs(b)
    if mags.sum() + 0.5 * gamma * (mags @ mags) <= tau:
        return b.copy()

    rng = np.random.default_rng(seed)
    weights = mags + 0.5 * gamma * mags * mags
    candidates = np.arange(b.size)
    s = 0.0
    rho = 0
    while candidates.size:
        pivot = candidates[rng.integers(candidates.size)]
        bk = mags[pivot]
        upper = mags[candidates] >= bk
        greater = candidates[upper]
        d_rho = greater.size
        d_s = weights[greater].sum()
        if s + d_s - (rho + d_rho) * (1.0 + 0.5 * gamma * bk) * bk < tau * (1.0 + gamma * bk) ** 2:
            s += d_s
            rho += d_rho
            candidates = candidates[~upper]
        else:
            candidates = greater[greater != pivot]

    qa = gamma * gamma * tau + 0.5 * gamma * rho
    qb = 2.0 * gamma * tau + rho
    qc = tau - s
    if qa == 0:
        lam = -qc / qb
    else:
        # Larger root of qa l^2 + qb l + qc, written without cancellation.
        lam = -2.0 * qc / (qb + np.sqrt(qb * qb - 4.0 * qa * qc))
    return np.sign(b) * np.maximum(mags - lam, 0.0) / (1.0 + lam * gamma)


def project_l1_ball(b, tau: float = 1.0, seed: int = 0) -> np.ndarray:
    """!@brief Projection onto {||u||_1 <= tau}; the gamma = 0 case of project_elastic_net."""
    return project_elastic_net(b, 0.0, tau, seed=seed)


# --- fused lasso signal approximation --------------------------------------------------------------------------

def lower_cumsum(w) -> np.ndarray:
    """!@brief e = L w for the lower-triangular all-ones matrix L: e[0] = w[0], e[i] = e[i-1] + w[i]."""
    return np.cumsum(np.asarray(w, dtype=float))


def upper_cumsum(w) -> np.ndarray:
    """!@brief e = L^T w: e[m-1] = w[m-1], e[i] = w[i] + e[i+1]."""
    return np.cumsum(np.asarray(w, dtype=float)[::-1])[::-1]


def _gram_inverse_bands(active, m: int):
    active = np.asarray(active, dtype=int)
    c = np.empty(active.size)
    c[:-1] = 1.0 / np.diff(active)
    c[-1] = 1.0 / (m - active[-1])
    diag = c.copy()
    diag[1:] += c[:-1]
    return diag, c[:-1]


def active_gram_inverse(active, m: int) -> np.ndarray:
    """!
    @brief Closed-form (L_G^T L_G)^{-1} for the columns G = active (sorted) of the m x m all-ones lower design.
    @details The inverse is tridiagonal: off-diagonals -c_i with c_i = 1/(a_{i+1} - a_i), last c_p = 1/(m - a_p),
    diagonal c_1, c_1 + c_2, ..., c_{p-1} + c_p.
    """
    active = np.asarray(active, dtype=int)
    if active.size == 0:
        return np.zeros((0, 0))
    if np.any(np.diff(active) <= 0) or active[0] < 0 or active[-1] >= m:
        raise ValueError(f"Active set must be strictly increasing indices in [0, {m}).")
    diag, off = _gram_inverse_bands(active, m)
    return np.diag(diag) - np.diag(off, 1) - np.diag(off, -1)


def _apply_gram_inverse(active, m: int, z) -> np.ndarray:
    diag, off = _gram_inverse_bands(active, m)
    y = diag * z
    y[:-1] -= off * z[1:]
    y[1:] -= off * z[:-1]
    return y


@dataclass
class FusedPath:
    """!
    @brief Regularization path of min 1/2||b - u||^2 + g FL(u) over g in [0, inf).
    @details breakpoints holds the decreasing values of g where the set of free jumps changes; solutions holds u at
    each of them. Above the first breakpoint the solution is the constant mean of b; between breakpoints it is
    linear in g; end_solution is the solution at g = 0.
    """
    mean_solution: np.ndarray
    breakpoints: list
    solutions: list
    end_solution: np.ndarray

    def at(self, g: float) -> np.ndarray:
        if g < 0:
            raise ValueError(f"Fused weight must be >= 0, got {g}.")
        if not self.breakpoints or g >= self.breakpoints[0]:
            return self.mean_solution.copy() if self.breakpoints else self.end_solution.copy()
        knots = self.breakpoints + [0.0]
        values = self.solutions + [self.end_solution]
        i = int(np.searchsorted(-np.asarray(knots), -g, side="right")) - 1
        i = min(max(i, 0), len(knots) - 2)
        hi, lo = knots[i], knots[i + 1]
        theta = (hi - g) / (hi - lo) if hi > lo else 1.0
        return (1.0 - theta) * values[i] + theta * values[i + 1]


def flsa_path(b, max_steps: int | None = None) -> FusedPath:
    """!
    @brief Traces the fused lasso signal approximation path with a weighted-lasso homotopy on the differences.
    @details With v[0] = u[0] and v[i] = u[i] - u[i-1] the problem is a lasso on the lower all-ones design with
    weight 0 on v[0] and g elsewhere. Each kink costs O(m): products with the design are cumulative sums and the
    active Gram inverse is the tridiagonal closed form, so no factorization is ever built.
    @param b The signal.
    @param max_steps Cap on path events (defaults to 4m + 16).
    @return The FusedPath of b.
    """
    b = _as_vector(b, "signal")
    m = b.size
    mean = np.full(m, b.mean())
    if m == 1:
        return FusedPath(b.copy(), [], [], b.copy())
    if max_steps is None:
        max_steps = 4 * m + 16

    top = upper_cumsum(b)
    active = [0]
    signs = np.zeros(m)
    v = np.zeros(m)

    def solve_active(g):
        idx = np.asarray(active)
        return idx, _apply_gram_inverse(idx, m, top[idx] - g * signs[idx])

    def correlations(vec):
        return upper_cumsum(b - lower_cumsum(vec))

    v[0] = b.mean()
    corr = correlations(v)
    corr[0] = 0.0
    g = float(np.max(np.abs(corr[1:])))
    if g <= KINK_TOL * max(1.0, np.abs(b).max()):
        return FusedPath(mean, [], [], b.copy())

    breakpoints, solutions = [], []
    enter = int(np.argmax(np.abs(corr[1:]))) + 1
    enter_sign, drop = np.sign(corr[enter]), None
    just_dropped, dropped_sign = -1, 0.0
    for _ in range(max_steps):
        entered = enter
        if enter is not None:
            active.append(enter)
            active.sort()
            signs[enter] = enter_sign
        if drop is not None:
            active.remove(drop)
            signs[drop] = 0.0
            v[drop] = 0.0
        idx, v_act = solve_active(g)
        v[:] = 0.0
        v[idx] = v_act
        if entered is not None:
            v[entered] = 0.0
        breakpoints.append(g)
        solutions.append(lower_cumsum(v))

        # Direction of v as g decreases, and the matching drift of the correlations.
        direction = np.zeros(m)
        direction[idx] = _apply_gram_inverse(idx, m, signs[idx])
        drift = upper_cumsum(lower_cumsum(direction))
        corr = correlations(v)

        best, enter, enter_sign, drop = g, None, None, None
        inactive = np.ones(m, dtype=bool)
        inactive[idx] = False
        inactive[0] = False
        scale = KINK_TOL * max(1.0, g)
        for j in np.flatnonzero(inactive):
            for sgn in (1.0, -1.0):
                denom = 1.0 - sgn * drift[j]
                if denom <= 1e-15:
                    continue
                gap = g - sgn * corr[j]
                if j == just_dropped and sgn == dropped_sign and gap <= 1e-10 * (1.0 + g):
                    continue
                delta = max(gap / denom, 0.0)
                if delta < best - scale:
                    best, enter, enter_sign, drop = delta, j, sgn, None
        for j in idx[1:]:
            if direction[j] != 0.0:
                delta = -v[j] / direction[j]
                if 0.0 < delta < best - scale:
                    best, enter, enter_sign, drop = delta, None, None, int(j)
        if drop is not None:
            just_dropped, dropped_sign = drop, float(signs[drop])
        else:
            just_dropped, dropped_sign = -1, 0.0
        if enter is None and drop is None:
            break
        g = max(g - best, 0.0)
        if g <= 0.0:
            break
    else:
        raise ConvergenceError("fused lasso homotopy", max_steps, g)

    idx, v_act = solve_active(0.0)
    v[:] = 0.0
    v[idx] = v_act
    return FusedPath(mean, breakpoints, solutions, lower_cumsum(v))


def fused_lasso_prox(b, w: ProxWeights) -> np.ndarray:
    """!
    @brief Solves min 1/2||b - u||^2 + l1 ||u||_1 + fuse FL(u) + ridge/2 ||u||^2.
    @details The fused part comes from the homotopy; the l1 term is a soft threshold of that solution and the
    ridge term a final 1/(1 + ridge) scaling.
    """
    b = _as_vector(b, "signal")
    z = flsa_path(b).at(w.fuse) if w.fuse > 0 else b.copy()
    return soft_threshold(z, w.l1) / (1.0 + w.ridge)


def _fused_pieces(path: FusedPath | None, b, gamma1, gamma2):
    """Kinks, in increasing multiplier order, of u(l) = soft(z(l gamma2), l gamma1) / (1 + 2l)."""
    if path is None or not path.breakpoints:
        knots = [0.0]
        values = [b if path is None else path.end_solution]
        tail = values[0]
    else:
        knots = [0.0] + [g / gamma2 for g in reversed(path.breakpoints)]
        values = [path.end_solution] + list(reversed(path.solutions))
        tail = path.mean_solution
    lambdas = set(knots)
    for i, lo in enumerate(knots):
        z_lo = values[i]
        if i + 1 < len(knots):
            hi = knots[i + 1]
            if hi <= lo:
                continue
            slope = (values[i + 1] - z_lo) / (hi - lo)
        else:
            hi, slope, z_lo = np.inf, np.zeros_like(z_lo), tail
        if gamma1 > 0:
            intercept = z_lo - lo * slope
            for sgn in (1.0, -1.0):
                denom = sgn * gamma1 - slope
                with np.errstate(divide="ignore", invalid="ignore"):
                    cross = np.where(np.abs(denom) > 1e-15, intercept / denom, np.nan)
                lambdas.update(float(x) for x in cross[(cross > lo) & (cross < hi)])
    return sorted(lambdas)


def project_fused_lasso_set(b, gamma1: float, gamma2: float, radius: float = 1.0) -> np.ndarray:
    """!
    @brief Projects b onto {u : ||u||^2 + gamma1 ||u||_1 + gamma2 FL(u) <= radius}.
    @details Follows the multiplier path u(l) = P(l gamma1, l gamma2, 2l) of the penalized problem. Between kinks
    of the fused path and of the soft threshold, (1 + 2l)^2 times the constraint value is a quadratic in l, so the
    boundary point is found in closed form on the first piece where the constraint becomes satisfied.
    @return b unchanged when feasible, otherwise the boundary point.
    """
    b = _as_vector(b)
    if gamma1 < 0 or gamma2 < 0:
        raise ValueError(f"Fused-lasso weights must be >= 0, got ({gamma1}, {gamma2}).")
    if not radius > 0:
        raise ValueError(f"Fused-lasso radius must be > 0, got {radius}.")
    if fused_lasso_value(b, gamma1, gamma2) <= radius:
        return b.copy()
    if gamma1 == 0 and gamma2 == 0:
        return project_l2_ball(b, np.sqrt(radius))

    path = flsa_path(b) if gamma2 > 0 else None

    def point(lam):
        z = path.at(lam * gamma2) if path is not None else b
        return soft_threshold(z, lam * gamma1)

    def excess(lam):
        return fused_lasso_value(point(lam) / (1.0 + 2.0 * lam), gamma1, gamma2) - radius

    knots = _fused_pieces(path, b, gamma1, gamma2)
    lo = knots[0]
    hi = None
    for knot in knots[1:]:
        if excess(knot) <= 0.0:
            hi = knot
            break
        lo = knot
    if hi is None:
        hi = max(2.0 * lo, 1.0)
        while excess(hi) > 0.0:
            lo, hi = hi, 2.0 * hi

    lam = _piece_root(point, lo, hi, gamma1, gamma2, radius)
    if lam is None or not abs(excess(lam)) <= ROOT_TOL * max(1.0, radius):
        lo, hi = _rebracket(excess, lo, hi)
        lam = lo if excess(lo) <= 0.0 else brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                                    maxiter=500)
    return point(lam) / (1.0 + 2.0 * lam)


def _rebracket(excess, lo, hi):
    """Moves [lo, hi] until excess(lo) > 0 >= excess(hi); excess is non-increasing along the multiplier path."""
    while excess(hi) > 0.0:
        lo, hi = hi, 2.0 * hi + 1.0
    while lo > 0.0 and excess(lo) <= 0.0:
        lo, hi = (0.0 if lo < 1e-300 else 0.5 * lo), lo
    return lo, hi


def _piece_root(point, lo, hi, gamma1, gamma2, radius):
    """Closed-form root of the constraint on one linear piece of the soft-thresholded fused path."""
    if not hi > lo:
        return None
    y_lo, y_hi = point(lo), point(hi)
    q = (y_hi - y_lo) / (hi - lo)
    p = y_lo - lo * q
    mid = point(0.5 * (lo + hi))
    s = np.sign(mid)
    sigma = np.sign(np.diff(mid))
    l1_a, l1_b = s @ p, s @ q
    fl_a, fl_b = sigma @ np.diff(p), sigma @ np.diff(q)
    lin_a = gamma1 * l1_a + gamma2 * fl_a
    lin_b = gamma1 * l1_b + gamma2 * fl_b
    c2 = q @ q + 2.0 * lin_b - 4.0 * radius
    c1 = 2.0 * (p @ q) + lin_b + 2.0 * lin_a - 4.0 * radius
    c0 = p @ p + lin_a - radius
    roots = np.roots([c2, c1, c0]) if abs(c2) > 1e-300 else np.array([-c0 / c1]) if c1 != 0 else np.array([])
    span = KINK_TOL * max(1.0, hi)
    for r in np.sort(roots[np.abs(np.imag(roots)) <= 1e-12].real):
        if lo - span <= r <= hi + span:
            return float(min(max(r, lo), hi))
    return None
