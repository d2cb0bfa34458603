"""!@file dictionary_update.py
@brief The dictionary, its sufficient statistics and the block-coordinate update that minimizes the surrogate.
@details The surrogate of the online learner only depends on the codes through A = sum(alpha alpha^T) and
B = sum(x alpha^T). Given those, each column of D is updated in turn with u = (b_j - D a_j) / A_jj + d_j followed
by a projection onto the column constraint set.
@version 0.1.0
@date_created 2025-03-21
@date_modified 2025-04-01
@author Leland Green
@license MIT
"""
from dataclasses import dataclass, field

import numpy as np

from projections import ConstraintKind, ConstraintSet

## Columns with A_jj below this are not updated: the atom has not been used.
SINGULAR_TOL = 1e-10


@dataclass
class Dictionary:
    """!
    @brief An m x k matrix of atoms (columns) together with the constraint set every column must satisfy.
    @details skipped_atoms lists the columns the last update left untouched because they were unused.
    """
    atoms: np.ndarray
    constraint: ConstraintSet = field(default_factory=ConstraintSet)
    skipped_atoms: tuple = ()

    def __post_init__(self):
        self.atoms = np.array(self.atoms, dtype=float)
        if self.atoms.ndim != 2 or min(self.atoms.shape) < 1:
            raise ValueError(f"Dictionary atoms must be a non-empty 2-D matrix, got shape {self.atoms.shape}.")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("Dictionary atoms contain non-finite entries.")

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    def gram(self) -> np.ndarray:
        return self.atoms.T @ self.atoms

    def is_feasible(self, tol: float = 1e-10) -> bool:
        return all(self.constraint.contains(self.atoms[:, j], tol) for j in range(self.k))

    def density(self, threshold: float = 0.0) -> float:
        """!@brief Fraction of entries with magnitude above threshold."""
        return float(np.count_nonzero(np.abs(self.atoms) > threshold)) / self.atoms.size

    def copy(self) -> "Dictionary":
        return Dictionary(self.atoms.copy(), self.constraint, self.skipped_atoms)


@dataclass
class SurrogateStats:
    """!@brief Sufficient statistics A (k x k, symmetric PSD) and B (m x k) of the surrogate."""
    A: np.ndarray
    B: np.ndarray

    @classmethod
    def zeros(cls, m: int, k: int) -> "SurrogateStats":
        return cls(np.zeros((k, k)), np.zeros((m, k)))

    def copy(self) -> "SurrogateStats":
        return SurrogateStats(self.A.copy(), self.B.copy())

    def scale(self, factor: float):
        self.A *= factor
        self.B *= factor

    def accumulate(self, signals, codes, weight: float = 1.0):
        """!@brief A += weight * codes codes^T and B += weight * signals codes^T."""
        self.A += weight * (codes @ codes.T)
        self.B += weight * (signals @ codes.T)

    def forget_atoms(self, atoms):
        self.A[atoms, :] = 0.0
        self.A[:, atoms] = 0.0
        self.B[:, atoms] = 0.0

    def is_psd(self, tol: float = 1e-10) -> bool:
        """!@brief Symmetric and positive semidefinite, checked with a Cholesky factorization of A + tol I."""
        if not np.allclose(self.A, self.A.T, atol=tol * max(1.0, np.abs(self.A).max(initial=0.0))):
            return False
        try:
            np.linalg.cholesky(self.A + tol * max(1.0, np.trace(self.A)) * np.eye(self.A.shape[0]))
        except np.linalg.LinAlgError:
            return False
        return True


def quadratic_objective(D, stats: SurrogateStats) -> float:
    """!@brief 1/2 Tr(D^T D A) - Tr(D^T B), the part of the surrogate that depends on D."""
    atoms = np.asarray(getattr(D, "atoms", D), dtype=float)
    return float(0.5 * np.sum((atoms.T @ atoms) * stats.A) - np.sum(atoms * stats.B))


def update_dictionary(dictionary: Dictionary, stats: SurrogateStats, max_sweeps: int = 1, tol: float = 1e-8,
                      ridge: float = 0.0, check_monotone: bool = False) -> Dictionary:
    """!
    @brief Block-coordinate descent over the columns of D on the surrogate, warm-started at the current D.
    @param dictionary Current dictionary; it is not modified.
    @param stats Sufficient statistics A, B.
    @param max_sweeps Maximum number of passes over the columns.
    @param tol Stop when a sweep moves D by less than this (Frobenius norm).
    @param ridge Adds ridge/2 ||D||_F^2 to the surrogate (A + ridge I).
    @param check_monotone Verify that every column step does not increase the surrogate.
    @return A new Dictionary; unused columns (A_jj below SINGULAR_TOL) are kept and listed in skipped_atoms.
    """
    D = dictionary.atoms.copy()
    m, k = D.shape
    if stats.A.shape != (k, k) or stats.B.shape != (m, k):
        raise ValueError(f"Statistics shapes {stats.A.shape}, {stats.B.shape} do not match dictionary {D.shape}.")
    if max_sweeps < 1:
        raise ValueError(f"max_sweeps must be >= 1, got {max_sweeps}.")
    A = stats.A + ridge * np.eye(k) if ridge > 0 else stats.A
    B = stats.B
    constraint = dictionary.constraint
    skipped = set()
    for _ in range(max_sweeps):
        previous = D.copy()
        for j in range(k):
            ajj = A[j, j]
            if ajj < SINGULAR_TOL:
                skipped.add(j)
                continue
            u = (B[:, j] - D @ A[:, j]) / ajj + D[:, j]
            new = constraint.project(u, seed=j)
            if check_monotone:
                before = np.sum((D[:, j] - u) ** 2)
                after = np.sum((new - u) ** 2)
                if after > before + 1e-10 * (1.0 + before):
                    raise ArithmeticError(f"Column {j} update increased the surrogate ({before:.6e} -> {after:.6e}).")
            D[:, j] = new
        if np.linalg.norm(D - previous) < tol:
            break
    return Dictionary(D, constraint, tuple(sorted(skipped)))


def stale_atoms(usage, threshold: int) -> np.ndarray:
    """!@brief Indices of atoms whose consecutive-unused counter reached threshold."""
    usage = np.asarray(usage)
    return np.flatnonzero(usage >= threshold) if threshold > 0 else np.zeros(0, dtype=int)


def replace_unused_atoms(dictionary: Dictionary, usage, source, rng_seed, threshold: int = 1) -> Dictionary:
    """!
    @brief Re-initializes every stale atom with a random normalized training sample projected onto the constraint.
    @details The caller zeroes the matching rows/columns of A and B (SurrogateStats.forget_atoms).
    @param dictionary Current dictionary (not modified).
    @param usage Per-atom count of consecutive iterations without use.
    @param source Training samples, m x n with n >= 1. All-zero samples fall back to Gaussian atoms.
    @param rng_seed Seed or numpy Generator.
    @param threshold Usage count at which an atom is stale.
    @return The new dictionary.
    """
    source = np.asarray(source, dtype=float)
    if source.ndim != 2 or source.shape[0] != dictionary.m:
        raise ValueError(f"Replacement samples must be {dictionary.m} x n, got {source.shape}.")
    if source.shape[1] == 0:
        raise ValueError("No samples to draw replacement atoms from.")
    rng = np.random.default_rng(rng_seed)
    fresh = dictionary.copy()
    norms = np.linalg.norm(source, axis=0)
    usable = np.flatnonzero(norms > 0)
    for j in stale_atoms(usage, threshold):
        if usable.size:
            i = usable[rng.integers(usable.size)]
            sample = source[:, i] / norms[i]
        else:
            sample = rng.standard_normal(dictionary.m)
            sample /= np.linalg.norm(sample)
        fresh.atoms[:, j] = dictionary.constraint.project(sample)
    return fresh


def random_dictionary(X, k: int, constraint: ConstraintSet | None = None, seed=0) -> Dictionary:
    """!@brief Initial dictionary: k distinct random columns of X (normalized), topped up with Gaussian atoms."""
    X = np.asarray(X, dtype=float)
    constraint = constraint or ConstraintSet()
    if k < 1:
        raise ValueError(f"Dictionary size k must be >= 1, got {k}.")
    rng = np.random.default_rng(seed)
    m, n = X.shape
    atoms = np.empty((m, k))
    picks = rng.permutation(n)[:k]
    for j in range(k):
        column = X[:, picks[j]] if j < picks.size else rng.standard_normal(m)
        norm = np.linalg.norm(column)
        if norm == 0.0:
            column = rng.standard_normal(m)
            norm = np.linalg.norm(column)
        column = column / norm
        if constraint.nonneg or constraint.kind == ConstraintKind.NONNEG_L2_BALL:
            column = np.abs(column)
        atoms[:, j] = constraint.project(column)
    return Dictionary(atoms, constraint)
