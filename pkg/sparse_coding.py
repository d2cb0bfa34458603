"""!@file sparse_coding.py
@brief Sparse coding solvers: LARS-Lasso homotopy, coordinate descent and group lasso.
@details Given a signal x and a dictionary D, these routines compute the code alpha minimizing
1/2||x - D alpha||^2 + lambda ||alpha||_1 (+ lambda2/2 ||alpha||^2). The homotopy works on the Gram form
(c = D^T x, G = D^T D) so that one Gram matrix can serve a whole mini-batch, and it maintains an incremental
Cholesky factor of the active Gram block. The path can stop at a target lambda, an l1 budget or a residual
level, which gives the constrained coding variants for free.
@version 0.1.0
@date_created 2025-03-18
@date_modified 2025-04-02
@author Leland Green
@license MIT
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, solve, solve_triangular

## Squared Cholesky pivots below this mean the entering atom is (numerically) in the span of the active ones.
PIVOT_TOL = 1e-12
## Atom norms may exceed one by this much before the signal-form solvers reject the dictionary.
NORM_TOL = 1e-8
## Coordinate-descent settings used by encode when the homotopy meets linearly dependent atoms.
FALLBACK_TOL = 1e-9
FALLBACK_SWEEPS = 5000


class DegeneratePathError(ArithmeticError):
    """!@brief Raised when an atom enters the active set but its Gram block is singular."""

    def __init__(self, atom: int, pivot: float):
        super().__init__(f"Active Gram matrix is singular when atom {atom} enters the path (pivot {pivot:.3e}).")
        self.atom = atom
        self.pivot = pivot


class ConvergenceError(ArithmeticError):
    """!@brief Raised when an iterative solver reaches its iteration cap; carries the last residual."""

    def __init__(self, solver: str, iterations: int, residual: float):
        super().__init__(f"{solver} did not converge after {iterations} iterations (residual {residual:.3e}).")
        self.solver = solver
        self.iterations = iterations
        self.residual = residual


class StopKind(str, Enum):
    LAMBDA = "lambda"
    L1_BUDGET = "l1_budget"
    RESIDUAL = "residual"


class StopReason(str, Enum):
    LAMBDA_REACHED = "lambda_reached"
    L1_BUDGET_REACHED = "l1_budget_reached"
    RESIDUAL_REACHED = "residual_reached"
    PATH_EXHAUSTED = "path_exhausted"


@dataclass(frozen=True)
class StopRule:
    """!@brief Where the homotopy ends: at a lambda, at an l1 budget T, or at a squared residual epsilon."""
    kind: StopKind = StopKind.LAMBDA
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StopKind(self.kind))
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"Stop value must be finite and >= 0, got {self.value}.")

    @classmethod
    def at_lambda(cls, lam: float) -> "StopRule":
        return cls(StopKind.LAMBDA, lam)

    @classmethod
    def l1_budget(cls, budget: float) -> "StopRule":
        return cls(StopKind.L1_BUDGET, budget)

    @classmethod
    def residual(cls, epsilon: float) -> "StopRule":
        return cls(StopKind.RESIDUAL, epsilon)


@dataclass(frozen=True)
class PenaltyConfig:
    """!
    @brief Penalty of the coding problem.
    @details l1_weight is lambda, l2_weight the elastic-net lambda2, nonneg restricts codes to alpha >= 0 and
    per_index_weights (optional, one per atom) scales lambda per coefficient. A zero weight leaves that coefficient
    unpenalized; the homotopy keeps it active from the start.
    """
    l1_weight: float = 0.0
    l2_weight: float = 0.0
    nonneg: bool = False
    per_index_weights: tuple | None = None

    def __post_init__(self):
        if not (np.isfinite(self.l1_weight) and self.l1_weight >= 0):
            raise ValueError(f"l1_weight must be finite and >= 0, got {self.l1_weight}.")
        if not (np.isfinite(self.l2_weight) and self.l2_weight >= 0):
            raise ValueError(f"l2_weight must be finite and >= 0, got {self.l2_weight}.")
        if self.per_index_weights is not None:
            weights = tuple(float(w) for w in self.per_index_weights)
            if any(not np.isfinite(w) or w < 0 for w in weights):
                raise ValueError("per_index_weights must be finite and >= 0.")
            object.__setattr__(self, "per_index_weights", weights)

    def weights(self, k: int) -> np.ndarray:
        if self.per_index_weights is None:
            return np.ones(k)
        if len(self.per_index_weights) != k:
            raise ValueError(f"Expected {k} per-index weights, got {len(self.per_index_weights)}.")
        return np.asarray(self.per_index_weights, dtype=float)


@dataclass
class SparseCode:
    """!@brief A code over a dictionary of k atoms, stored as its active set (increasing) and the matching values."""
    size: int
    active_set: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_dense(cls, alpha) -> "SparseCode":
        alpha = np.asarray(alpha, dtype=float).ravel()
        active = np.flatnonzero(alpha)
        return cls(alpha.size, active, alpha[active].copy())

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.values)

    @property
    def nnz(self) -> int:
        return int(self.active_set.size)

    def to_dense(self) -> np.ndarray:
        alpha = np.zeros(self.size)
        alpha[self.active_set] = self.values
        return alpha

    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum())


@dataclass
class PathSegment:
    """!@brief One linear piece of the path: from lam downward, alpha(lam - d) = solution + d * direction."""
    lam: float
    active_set: tuple
    solution: np.ndarray
    direction: np.ndarray


@dataclass
class RegPath:
    """!
    @brief The piecewise-linear regularization path alpha(lambda) traced by the homotopy.
    @details breakpoints are the strictly decreasing values of lambda where the active set changes. The path is
    valid on [end_lambda, inf); above breakpoints[0] the solution is start_solution (zero unless some weights are 0).
    """
    breakpoints: list
    segments: list
    stop_reason: StopReason
    end_lambda: float
    end_solution: np.ndarray
    start_solution: np.ndarray

    @property
    def endpoint(self) -> SparseCode:
        return SparseCode.from_dense(self.end_solution)

    @property
    def kink_count(self) -> int:
        return len(self.breakpoints)

    @property
    def breakpoint_solutions(self) -> list:
        return [seg.solution for seg in self.segments]

    def solution_at(self, lam: float) -> np.ndarray:
        """!@brief Exact solution at any lam >= end_lambda, by interpolation on the containing segment."""
        if lam < self.end_lambda - 1e-12 * max(1.0, self.end_lambda):
            raise ValueError(f"The path was stopped at lambda = {self.end_lambda}; {lam} is below it.")
        if not self.segments or lam >= self.breakpoints[0]:
            return self.start_solution.copy() if self.segments else self.end_solution.copy()
        i = int(np.searchsorted(-np.asarray(self.breakpoints), -lam, side="right")) - 1
        seg = self.segments[i]
        return seg.solution + (seg.lam - lam) * seg.direction


def _cholesky_insert(chol: np.ndarray, gram: np.ndarray, active: list, j: int) -> np.ndarray:
    p = len(active)
    if p == 0:
        pivot = gram[j, j]
        if pivot < PIVOT_TOL:
            raise DegeneratePathError(j, pivot)
        return np.array([[np.sqrt(pivot)]])
    row = solve_triangular(chol, gram[active, j], lower=True, check_finite=False)
    pivot = gram[j, j] - row @ row
    if pivot < PIVOT_TOL:
        raise DegeneratePathError(j, pivot)
    grown = np.zeros((p + 1, p + 1))
    grown[:p, :p] = chol
    grown[p, :p] = row
    grown[p, p] = np.sqrt(pivot)
    return grown


def _cholesky_delete(chol: np.ndarray, position: int) -> np.ndarray:
    """Removes one row/column from the Gram block and restores the lower-triangular factor with Givens rotations."""
    lower = np.delete(chol, position, axis=0)
    for i in range(position, lower.shape[0]):
        a, b = lower[i, i], lower[i, i + 1]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        col_i, col_n = lower[i:, i].copy(), lower[i:, i + 1].copy()
        lower[i:, i] = c * col_i + s * col_n
        lower[i:, i + 1] = -s * col_i + c * col_n
    lower = lower[:, :-1]
    neg = np.diag(lower) < 0
    lower[:, neg] *= -1.0
    return lower


def _residual_sq(x_sq, c, gram_data, alpha):
    return float(x_sq - 2.0 * (c @ alpha) + alpha @ gram_data @ alpha)


def lars_lasso_path_gram(c, gram, x_sq: float, penalty: PenaltyConfig, stop: StopRule,
                         max_steps: int | None = None) -> RegPath:
    """!
    @brief Homotopy on the Gram form of the weighted (elastic-net, optionally non-negative) lasso.
    @param c Correlations D^T x (length k).
    @param gram Data Gram matrix D^T D (k x k). lambda2 is added internally.
    @param x_sq ||x||^2, used by the residual stop rule.
    @param penalty Penalty configuration; its l1_weight is ignored, the stop rule decides where to end.
    @param stop Stop rule.
    @param max_steps Cap on path events, defaults to 8k + 100.
    @return The path, with the final code at its end.
    """
    c = np.asarray(c, dtype=float)
    gram_data = np.asarray(gram, dtype=float)
    k = c.size
    if gram_data.shape != (k, k):
        raise ValueError(f"Gram matrix shape {gram_data.shape} does not match {k} correlations.")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(gram_data))):
        raise ValueError("Correlations or Gram matrix contain non-finite entries.")
    weights = penalty.weights(k)
    gram_pen = gram_data + penalty.l2_weight * np.eye(k) if penalty.l2_weight > 0 else gram_data
    nonneg = penalty.nonneg
    if max_steps is None:
        max_steps = 8 * k + 100

    alpha = np.zeros(k)
    signs = np.zeros(k)
    active: list = []
    chol = np.zeros((0, 0))
    for j in np.flatnonzero(weights == 0):
        chol = _cholesky_insert(chol, gram_pen, active, int(j))
        active.append(int(j))
    if active:
        alpha[active] = cho_solve((chol, True), c[active])
        signs[active] = np.sign(alpha[active])
    start = alpha.copy()

    corr = c - gram_pen @ alpha
    penalized = weights > 0
    bound = np.where(penalized, (corr if nonneg else np.abs(corr)) / np.where(penalized, weights, 1.0), -np.inf)
    lam = max(float(bound.max()) if penalized.any() else 0.0, 0.0)

    def finish(reason, lam_end, sol):
        sol = sol.copy()
        if nonneg:
            sol[sol < 0] = 0.0
        return RegPath(breakpoints, segments, reason, lam_end, sol, start)

    breakpoints: list = []
    segments: list = []
    if stop.kind == StopKind.LAMBDA and stop.value >= lam:
        return finish(StopReason.LAMBDA_REACHED, stop.value, alpha)
    if stop.kind == StopKind.L1_BUDGET and float(np.abs(alpha[penalized]).sum()) >= stop.value:
        return finish(StopReason.L1_BUDGET_REACHED, lam, alpha)
    if stop.kind == StopKind.RESIDUAL and _residual_sq(x_sq, c, gram_data, alpha) <= stop.value:
        return finish(StopReason.RESIDUAL_REACHED, lam, alpha)
    if lam <= 0.0:
        return finish(StopReason.PATH_EXHAUSTED, 0.0, alpha)

    enter = int(np.argmax(bound))
    enter_sign = 1.0 if nonneg else float(np.sign(corr[enter]))
    drop = None
    just_dropped, dropped_sign = -1, 0.0
    for _ in range(max_steps):
        entered = enter
        if enter is not None:
            chol = _cholesky_insert(chol, gram_pen, active, enter)
            active.append(enter)
            signs[enter] = enter_sign
        if drop is not None:
            position = active.index(drop)
            chol = _cholesky_delete(chol, position)
            active.pop(position)
            signs[drop] = 0.0
            alpha[drop] = 0.0
        idx = np.asarray(active)
        # Re-anchor on the exact segment solution to keep rounding from accumulating.
        alpha[idx] = cho_solve((chol, True), c[idx] - lam * weights[idx] * signs[idx])
        if entered is not None:
            alpha[entered] = 0.0
        u_act = cho_solve((chol, True), weights[idx] * signs[idx])
        direction = np.zeros(k)
        direction[idx] = u_act
        breakpoints.append(lam)
        segments.append(PathSegment(lam, tuple(int(i) for i in idx), alpha.copy(), direction))

        corr = c - gram_pen @ alpha
        drift = gram_pen[:, idx] @ u_act
        best, enter, enter_sign, drop = lam, None, None, None
        event = StopReason.PATH_EXHAUSTED
        scale = 1e-12 * max(1.0, lam)

        candidates = penalized.copy()
        candidates[idx] = False
        for j in np.flatnonzero(candidates):
            for sgn in ((1.0,) if nonneg else (1.0, -1.0)):
                denom = weights[j] - sgn * drift[j]
                if denom <= 1e-15:
                    continue
                gap = lam * weights[j] - sgn * corr[j]
                # A coefficient that just reached zero sits on its bound; only a zero-step return is excluded.
                if j == just_dropped and sgn == dropped_sign and gap <= 1e-10 * (1.0 + lam) * weights[j]:
                    continue
                delta = gap / denom
                if delta < 0.0:
                    if delta < -1e-14 * (1.0 + lam):
                        continue
                    delta = 0.0
                if delta < best - scale:
                    best, enter, enter_sign, event = delta, int(j), sgn, None
        for i in idx:
            if penalized[i] and direction[i] != 0.0:
                delta = -alpha[i] / direction[i]
                if 0.0 < delta < best - scale:
                    best, enter, drop, event = delta, None, int(i), None

        stop_delta = _stop_delta(stop, lam, alpha, direction, penalized, signs, x_sq, c, gram_data, idx, u_act)
        if stop_delta is not None and stop_delta <= best:
            best, enter, drop = stop_delta, None, None
            event = {StopKind.LAMBDA: StopReason.LAMBDA_REACHED,
                     StopKind.L1_BUDGET: StopReason.L1_BUDGET_REACHED,
                     StopKind.RESIDUAL: StopReason.RESIDUAL_REACHED}[stop.kind]

        alpha = alpha + best * direction
        lam = max(lam - best, 0.0)
        if event is not None:
            if event == StopReason.LAMBDA_REACHED:
                lam = stop.value
            elif event == StopReason.PATH_EXHAUSTED and stop.kind == StopKind.LAMBDA and stop.value == 0.0:
                event = StopReason.LAMBDA_REACHED
            return finish(event, lam, alpha)
        if drop is not None:
            alpha[drop] = 0.0
            just_dropped, dropped_sign = drop, float(signs[drop])
        else:
            just_dropped, dropped_sign = -1, 0.0
    raise ConvergenceError("LARS-Lasso homotopy", max_steps, lam)


def _stop_delta(stop, lam, alpha, direction, penalized, signs, x_sq, c, gram_data, idx, u_act):
    """Step along the current segment until the stop rule triggers, or None when it does not on this segment."""
    if stop.kind == StopKind.LAMBDA:
        return max(lam - stop.value, 0.0)
    if stop.kind == StopKind.L1_BUDGET:
        rate = float(signs[penalized] @ direction[penalized])
        gap = stop.value - float(np.abs(alpha[penalized]).sum())
        if gap <= 0.0:
            return 0.0
        return gap / rate if rate > 0.0 else None
    gap = _residual_sq(x_sq, c, gram_data, alpha) - stop.value
    if gap <= 0.0:
        return 0.0
    slope = float((gram_data[idx] @ alpha - c[idx]) @ u_act)
    curve = float(u_act @ gram_data[np.ix_(idx, idx)] @ u_act)
    disc = slope * slope - curve * gap
    if disc < 0.0 or slope >= 0.0:
        return None
    return gap / (-slope + np.sqrt(disc))


def _atoms(D) -> np.ndarray:
    return np.asarray(getattr(D, "atoms", D), dtype=float)


def _check_problem(x, D, check_norms=True):
    atoms = _atoms(D)
    x = np.asarray(x, dtype=float)
    if atoms.ndim != 2:
        raise ValueError(f"Dictionary must be a 2-D matrix, got shape {atoms.shape}.")
    if x.ndim != 1:
        x = x.ravel()
    if x.size != atoms.shape[0]:
        raise ValueError(f"Signal length {x.size} does not match dictionary rows {atoms.shape[0]}.")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(atoms))):
        raise ValueError("Signal or dictionary contains non-finite entries.")
    if check_norms and np.any(np.linalg.norm(atoms, axis=0) > 1.0 + NORM_TOL):
        raise ValueError("Dictionary atoms must have l2 norm <= 1.")
    return x, atoms


def lars_lasso_path(x, D, penalty: PenaltyConfig, stop: StopRule) -> RegPath:
    """!@brief The homotopy for signal x over dictionary D (atoms with l2 norm <= 1)."""
    x, atoms = _check_problem(x, D)
    return lars_lasso_path_gram(atoms.T @ x, atoms.T @ atoms, float(x @ x), penalty, stop)


def lasso_solve_gram(c, gram, x_sq: float, penalty: PenaltyConfig, stop: StopRule | None = None) -> np.ndarray:
    """!@brief Dense code for one signal given its correlations and the shared Gram matrix."""
    if stop is None:
        stop = StopRule.at_lambda(penalty.l1_weight)
    if (stop.kind == StopKind.LAMBDA and stop.value == 0.0 and penalty.l2_weight > 0 and not penalty.nonneg):
        # Pure Tikhonov: one positive-definite solve.
        return solve(np.asarray(gram) + penalty.l2_weight * np.eye(len(c)), c, assume_a="pos")
    return lars_lasso_path_gram(c, gram, x_sq, penalty, stop).end_solution


def lasso_solve(x, D, penalty: PenaltyConfig) -> SparseCode:
    """!
    @brief Exact minimizer of 1/2||x - D alpha||^2 + lambda ||alpha||_1 + lambda2/2 ||alpha||^2.
    @param x Signal of length m.
    @param D Dictionary (m x k matrix or Dictionary) with atom norms <= 1.
    @param penalty lambda, lambda2, sign and per-index weights.
    @return The code; when lambda >= max|D^T x| it is all zeros.
    """
    x, atoms = _check_problem(x, D)
    return SparseCode.from_dense(lasso_solve_gram(atoms.T @ x, atoms.T @ atoms, float(x @ x), penalty))


def constrained_code(x, D, stop: StopRule, nonneg: bool = False) -> SparseCode:
    """!@brief Code with ||alpha||_1 <= T (or ||x - D alpha||^2 <= epsilon), read off the path."""
    if stop.kind == StopKind.LAMBDA:
        raise ValueError("Use lasso_solve for a lambda stop rule.")
    x, atoms = _check_problem(x, D)
    path = lars_lasso_path_gram(atoms.T @ x, atoms.T @ atoms, float(x @ x), PenaltyConfig(nonneg=nonneg), stop)
    return path.endpoint


def encode(X, D, penalty: PenaltyConfig, stop: StopRule | None = None, gram=None, threads: int = 1) -> np.ndarray:
    """!
    @brief Codes every column of X with one shared Gram matrix.
    @param X Signals, m x n.
    @param D Dictionary, m x k.
    @param penalty Coding penalty.
    @param stop Stop rule, defaults to lambda = penalty.l1_weight.
    @param gram Precomputed D^T D.
    @param threads Worker threads; columns are independent so the result does not depend on this.
    @return Codes, k x n.
    """
    atoms = _atoms(D)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != atoms.shape[0]:
        raise ValueError(f"Signals have {X.shape[0]} rows, dictionary has {atoms.shape[0]}.")
    if not np.all(np.isfinite(X)):
        raise ValueError("Signals contain non-finite entries.")
    gram = atoms.T @ atoms if gram is None else np.asarray(gram, dtype=float)
    C = atoms.T @ X
    norms = np.einsum("ij,ij->j", X, X)
    codes = np.zeros((atoms.shape[1], X.shape[1]))

    def code_column(i):
        try:
            codes[:, i] = lasso_solve_gram(C[:, i], gram, float(norms[i]), penalty, stop)
        except DegeneratePathError:
            if stop is not None and stop.kind != StopKind.LAMBDA:
                raise
            codes[:, i] = coordinate_descent_gram(C[:, i], gram, penalty, FALLBACK_TOL, FALLBACK_SWEEPS, strict=False)

    if threads > 1 and X.shape[1] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(code_column, range(X.shape[1])))
    else:
        for i in range(X.shape[1]):
            code_column(i)
    return codes


def lasso_objective(x, D, alpha, penalty: PenaltyConfig) -> float:
    """!@brief 1/2||x - D alpha||^2 + lambda sum w_j |alpha_j| + lambda2/2 ||alpha||^2."""
    atoms = _atoms(D)
    alpha = alpha.to_dense() if isinstance(alpha, SparseCode) else np.asarray(alpha, dtype=float)
    r = np.asarray(x, dtype=float) - atoms @ alpha
    weights = penalty.weights(alpha.size)
    return float(0.5 * r @ r + penalty.l1_weight * (weights @ np.abs(alpha)) + 0.5 * penalty.l2_weight * alpha @ alpha)


def kkt_residual(x, D, alpha, l1_weight: float, l2_weight: float = 0.0, nonneg: bool = False,
                 weights=None) -> float:
    """!
    @brief Largest violation of the optimality conditions of the lasso at alpha.
    @details With r = D^T(x - D alpha) - lambda2 alpha, an active j contributes |r_j - lambda w_j sign(alpha_j)|
    and an inactive one max(0, |r_j| - lambda w_j) (max(0, r_j - lambda w_j) for non-negative codes).
    """
    atoms = _atoms(D)
    alpha = alpha.to_dense() if isinstance(alpha, SparseCode) else np.asarray(alpha, dtype=float)
    w = np.ones(alpha.size) if weights is None else np.asarray(weights, dtype=float)
    r = atoms.T @ (np.asarray(x, dtype=float) - atoms @ alpha) - l2_weight * alpha
    return _kkt_from_correlations(r, alpha, l1_weight * w, nonneg)


def _kkt_from_correlations(r, alpha, thresholds, nonneg):
    on = alpha != 0
    active = np.abs(r[on] - thresholds[on] * np.sign(alpha[on]))
    off = r[~on] if nonneg else np.abs(r[~on])
    inactive = np.maximum(off - thresholds[~on], 0.0)
    return float(max(active.max(initial=0.0), inactive.max(initial=0.0)))


def closed_form_solution(x, D, active, signs, l1_weight: float) -> np.ndarray:
    """!@brief alpha_A = (D_A^T D_A)^{-1}(D_A^T x - lambda signs), zero elsewhere."""
    atoms = _atoms(D)
    active = np.asarray(active, dtype=int)
    alpha = np.zeros(atoms.shape[1])
    if active.size:
        sub = atoms[:, active]
        alpha[active] = solve(sub.T @ sub, sub.T @ np.asarray(x, dtype=float) - l1_weight * np.asarray(signs),
                              assume_a="pos")
    return alpha


def coordinate_descent_solve(x, D, penalty: PenaltyConfig, tol: float = 1e-10, max_sweeps: int = 100000) -> SparseCode:
    """!
    @brief Cyclic coordinate descent; stops when the KKT residual drops below tol.
    @throws ConvergenceError after max_sweeps sweeps.
    """
    x, atoms = _check_problem(x, D, check_norms=False)
    alpha = coordinate_descent_gram(atoms.T @ x, atoms.T @ atoms, penalty, tol, max_sweeps)
    return SparseCode.from_dense(alpha)


def coordinate_descent_gram(c, gram, penalty: PenaltyConfig, tol: float = 1e-10, max_sweeps: int = 100000,
                            strict: bool = True) -> np.ndarray:
    """!
    @brief Coordinate descent on the Gram form. Duplicate or dependent atoms are fine here.
    @param strict Raise ConvergenceError at the sweep cap; otherwise return the last iterate.
    """
    c = np.asarray(c, dtype=float)
    k = c.size
    gram = np.asarray(gram, dtype=float) + penalty.l2_weight * np.eye(k)
    thresholds = penalty.l1_weight * penalty.weights(k)
    alpha = np.zeros(k)
    corr = c.copy()
    residual = np.inf
    for _ in range(max_sweeps):
        for j in range(k):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = alpha[j]
            z = corr[j] + gjj * old
            if penalty.nonneg:
                new = max(z - thresholds[j], 0.0) / gjj
            else:
                new = np.sign(z) * max(abs(z) - thresholds[j], 0.0) / gjj
            if new != old:
                corr -= gram[:, j] * (new - old)
                alpha[j] = new
        corr = c - gram @ alpha
        residual = _kkt_from_correlations(corr, alpha, thresholds, penalty.nonneg)
        if residual < tol:
            return alpha
    if not strict:
        return alpha
    raise ConvergenceError("coordinate descent", max_sweeps, residual)


# --- group lasso -----------------------------------------------------------------------------------------------

def group_lasso_objective(X, D, codes, l1_weight: float) -> float:
    """!@brief 1/2||X - D A||_F^2 + lambda sum_j ||A[j, :]||_2."""
    atoms = _atoms(D)
    R = np.asarray(X, dtype=float) - atoms @ codes
    return float(0.5 * np.sum(R * R) + l1_weight * np.linalg.norm(codes, axis=1).sum())


def group_kkt_residual(X, D, codes, l1_weight: float) -> float:
    atoms = _atoms(D)
    R = atoms.T @ (np.asarray(X, dtype=float) - atoms @ codes)
    return _group_kkt(R, codes, l1_weight)


def _group_kkt(R, codes, l1_weight):
    norms = np.linalg.norm(codes, axis=1)
    on = norms > 0
    active = np.linalg.norm(R[on] - l1_weight * codes[on] / norms[on, None], axis=1)
    inactive = np.maximum(np.linalg.norm(R[~on], axis=1) - l1_weight, 0.0)
    return float(max(active.max(initial=0.0), inactive.max(initial=0.0)))


def group_lasso_solve(X, D, l1_weight: float, tol: float = 1e-10, max_sweeps: int = 100000, gram=None) -> np.ndarray:
    """!
    @brief Block coordinate descent for min 1/2||X - D A||_F^2 + lambda sum_j ||A[j, :]||_2.
    @details A group of one signal is an ordinary lasso and goes through the homotopy instead.
    @param X Group of q signals, m x q.
    @param D Dictionary, m x k.
    @param l1_weight lambda, >= 0.
    @return Codes A, k x q, whose rows are zero or non-zero as a whole.
    """
    atoms = _atoms(D)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != atoms.shape[0]:
        raise ValueError(f"Group has {X.shape[0]} rows, dictionary has {atoms.shape[0]}.")
    if not np.all(np.isfinite(X)):
        raise ValueError("Group contains non-finite entries.")
    gram = atoms.T @ atoms if gram is None else np.asarray(gram, dtype=float)
    if X.shape[1] == 1:
        x = X[:, 0]
        return lasso_solve_gram(atoms.T @ x, gram, float(x @ x), PenaltyConfig(l1_weight))[:, None]

    C = atoms.T @ X
    codes = np.zeros((atoms.shape[1], X.shape[1]))
    R = C.copy()
    residual = np.inf
    for _ in range(max_sweeps):
        for j in range(codes.shape[0]):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            z = R[j] + gjj * codes[j]
            norm = np.linalg.norm(z)
            new = z * (max(0.0, 1.0 - l1_weight / norm) / gjj) if norm > 0 else np.zeros_like(z)
            delta = new - codes[j]
            if np.any(delta):
                R -= np.outer(gram[:, j], delta)
                codes[j] = new
        R = C - gram @ codes
        residual = _group_kkt(R, codes, l1_weight)
        if residual < tol:
            return codes
    raise ConvergenceError("group block coordinate descent", max_sweeps, residual)
