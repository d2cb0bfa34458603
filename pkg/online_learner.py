"""!@file online_learner.py
@brief Online dictionary learning: sparse-code a mini-batch, fold it into the surrogate statistics, update D.
@details One iteration draws a mini-batch from the sample stream, codes it against the current dictionary,
discounts the past statistics by the forgetting factor beta_t = (1 - 1/t)^rho and adds the new ones, then runs the
block-coordinate dictionary update warm-started at the previous dictionary. Optional refinements:
- t0 warm-up: the statistics start at A = t0 I, B = t0 D0;
- purging for fixed training sets: the statistics are rebuilt at each epoch start from the previous epoch only;
- replacement of atoms unused for a number of epochs;
- batch mode: codes of the whole training set and an exact dictionary minimization at every iteration.
Checkpoints are taken on a geometric schedule and recorded in a MetricsTrace.
@version 0.1.0
@date_created 2025-03-25
@date_modified 2025-04-03
@author Leland Green
@license MIT
"""
import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from data_io import PermutedStream
from dictionary_update import (Dictionary, SurrogateStats, random_dictionary, replace_unused_atoms, stale_atoms,
                               update_dictionary)
from projections import ConstraintSet
from sparse_coding import PenaltyConfig, StopKind, StopRule, encode, group_lasso_solve
from spinner import Spinner

## Batch mode runs the dictionary update to convergence; this caps the sweeps.
BATCH_MAX_SWEEPS = 1000


class LearnerMode(str, Enum):
    ONLINE = "online"
    BATCH = "batch"


@dataclass(frozen=True)
class LearnerConfig:
    """!
    @brief Everything that defines a training run.
    @details penalty carries the sign constraint, lambda2 and per-atom weights; its l1_weight always mirrors
    l1_weight. coding_rule replaces the lambda stop by an l1 budget or a residual level. group_coding codes
    groups of signals jointly with the l1/l2 penalty. forget_start is the first iteration at which beta_t applies
    (None: one epoch into the run).
    """
    k: int = 256
    l1_weight: float = 0.15
    batch_size: int = 512
    forget_exponent: float = 0.0
    forget_start: int | None = None
    warmup: float = 0.0
    epochs: float = 1.0
    iterations: int | None = None
    purge_fixed_dataset: bool = False
    constraint: ConstraintSet = ConstraintSet()
    penalty: PenaltyConfig = PenaltyConfig()
    coding_rule: StopRule | None = None
    group_coding: bool = False
    mode: LearnerMode = LearnerMode.ONLINE
    rng_seed: int = 0
    max_sweeps: int = 1
    update_tol: float = 1e-8
    ridge: float = 0.0
    replace_unused: bool = True
    unused_epochs: float = 2.0
    threads: int = 1
    eval_size: int = 1000
    checkpoint_growth: float = 1.5
    keep_history: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", LearnerMode(self.mode))
        checks = [
            (self.k >= 1, f"k must be >= 1, got {self.k}"),
            (np.isfinite(self.l1_weight) and self.l1_weight >= 0, f"l1_weight must be >= 0, got {self.l1_weight}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.forget_exponent >= 0, f"forget_exponent must be >= 0, got {self.forget_exponent}"),
            (self.forget_start is None or self.forget_start >= 1, f"forget_start must be >= 1, got {self.forget_start}"),
            (self.warmup >= 0, f"warmup must be >= 0, got {self.warmup}"),
            (self.epochs > 0, f"epochs must be > 0, got {self.epochs}"),
            (self.iterations is None or self.iterations >= 1, f"iterations must be >= 1, got {self.iterations}"),
            (self.max_sweeps >= 1, f"max_sweeps must be >= 1, got {self.max_sweeps}"),
            (self.update_tol > 0, f"update_tol must be > 0, got {self.update_tol}"),
            (self.ridge >= 0, f"ridge must be >= 0, got {self.ridge}"),
            (self.unused_epochs >= 0, f"unused_epochs must be >= 0, got {self.unused_epochs}"),
            (self.threads >= 1, f"threads must be >= 1, got {self.threads}"),
            (self.eval_size >= 1, f"eval_size must be >= 1, got {self.eval_size}"),
            (self.checkpoint_growth > 1, f"checkpoint_growth must be > 1, got {self.checkpoint_growth}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message + ".")
        if self.group_coding and (self.penalty.nonneg or self.penalty.l2_weight > 0 or
                                  self.penalty.per_index_weights is not None or self.coding_rule is not None):
            raise ValueError("Group coding supports only the plain l1/l2 penalty.")
        if self.penalty.l1_weight != self.l1_weight:
            object.__setattr__(self, "penalty", replace(self.penalty, l1_weight=self.l1_weight))

    @property
    def penalizes_l1(self) -> bool:
        return self.coding_rule is None or self.coding_rule.kind == StopKind.LAMBDA


@dataclass
class CheckpointRecord:
    iteration: int
    wall_clock_s: float
    train_obj: float
    test_obj: float
    surrogate_obj: float
    mean_nnz: float
    dict_delta_fro: float


class MetricsTrace:
    """!@brief Checkpoint records of one run, in strictly increasing iteration order."""
    COLUMNS = ("iter", "wall_clock_s", "train_obj", "test_obj", "surrogate_obj", "mean_nnz", "dict_delta_fro")

    def __init__(self, records=None):
        self.records: list[CheckpointRecord] = []
        for record in records or []:
            self.append(record)

    def append(self, record: CheckpointRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError(f"Checkpoint iteration {record.iteration} does not follow {self.records[-1].iteration}.")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        attr = "iteration" if name == "iter" else name
        return np.array([getattr(r, attr) for r in self.records], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.COLUMNS)
            for r in self.records:
                writer.writerow([r.iteration, f"{r.wall_clock_s:.6f}"] +
                                [repr(float(v)) for v in (r.train_obj, r.test_obj, r.surrogate_obj, r.mean_nnz,
                                                          r.dict_delta_fro)])

    @classmethod
    def read_csv(cls, path) -> "MetricsTrace":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls([CheckpointRecord(int(row["iter"]), *(float(row[c]) for c in cls.COLUMNS[1:])) for row in rows])


@dataclass
class HistoryEntry:
    """!@brief One mini-batch kept for exact objective replays; weight carries all the forgetting applied so far."""
    signals: np.ndarray
    codes: np.ndarray
    draws: int
    splits: list | None
    weight: float = 1.0


@dataclass
class LearnerState:
    """!
    @brief Mutable state of a run.
    @details weight is the running normalizer (sum of forgetting-discounted mini-batch weights) and constant the
    matching discounted sum of the D-independent surrogate terms, so that the surrogate equals
    (1/2 Tr(D^T D A) - Tr(D^T B) + constant) / weight.
    """
    dictionary: Dictionary
    stats: SurrogateStats
    penalty: PenaltyConfig
    group_coding: bool = False
    t: int = 0
    weight: float = 0.0
    constant: float = 0.0
    purge_stats: SurrogateStats | None = None
    purge_weight: float = 0.0
    purge_constant: float = 0.0
    usage: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    initial_atoms: np.ndarray | None = None
    warmup_scale: float = 0.0
    last_delta: float = 0.0
    last_nnz: float = 0.0
    history: list | None = None
    epoch_mark: int = 0
    penalizes_l1: bool = True


def _penalty_total(codes, penalty: PenaltyConfig, splits, penalizes_l1=True) -> float:
    """Sum over a mini-batch of the code penalty (lasso, elastic net or l1/l2 over group rows)."""
    if splits is not None:
        norms = np.column_stack([np.linalg.norm(block, axis=1) for block in np.split(codes, splits, axis=1)])
        return float(penalty.l1_weight * norms.sum())
    total = 0.5 * penalty.l2_weight * float(np.sum(codes * codes))
    if penalizes_l1:
        total += penalty.l1_weight * float((penalty.weights(codes.shape[0])[:, None] * np.abs(codes)).sum())
    return total


def _loss_total(signals, codes, atoms, penalty, splits, penalizes_l1=True) -> float:
    residual = signals - atoms @ codes
    return 0.5 * float(np.sum(residual * residual)) + _penalty_total(codes, penalty, splits, penalizes_l1)


class OnlineLearner:
    """!
    @brief Runs the online (or batch) dictionary learning loop for one LearnerConfig.
    @details After train() the final LearnerState is available as `state`.
    """

    def __init__(self, config: LearnerConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.iterations_per_epoch: int | None = None
        self.state: LearnerState | None = None
        self._pool: np.ndarray | None = None

    # --- single steps --------------------------------------------------------------------------------------------

    def init(self, initial: Dictionary) -> LearnerState:
        """!@brief Fresh state at t = 0; with warm-up t0 the statistics start at A = t0 I, B = t0 D0."""
        cfg = self.config
        if initial.k != cfg.k:
            raise ValueError(f"Initial dictionary has {initial.k} atoms, the configuration asks for {cfg.k}.")
        D0 = Dictionary(initial.atoms, cfg.constraint)
        stats = SurrogateStats(cfg.warmup * np.eye(cfg.k), cfg.warmup * D0.atoms)
        return LearnerState(
            dictionary=D0, stats=stats, penalty=cfg.penalty, group_coding=cfg.group_coding,
            constant=0.5 * cfg.warmup * float(np.sum(D0.atoms ** 2)),
            purge_stats=SurrogateStats.zeros(D0.m, cfg.k) if cfg.purge_fixed_dataset else None,
            usage=np.zeros(cfg.k, dtype=int), rng=np.random.default_rng(cfg.rng_seed),
            initial_atoms=D0.atoms.copy(), warmup_scale=cfg.warmup,
            history=[] if cfg.keep_history else None, penalizes_l1=cfg.penalizes_l1)

    def forgetting_factor(self, t: int) -> float:
        """!@brief beta_t = (1 - 1/t)^rho once t reaches the forgetting start, 1 before."""
        rho = self.config.forget_exponent
        if rho == 0:
            return 1.0
        start = self.config.forget_start
        if start is None:
            start = (self.iterations_per_epoch or 0) + 1
        return (1.0 - 1.0 / t) ** rho if t >= start else 1.0

    def unused_threshold(self) -> int:
        cfg = self.config
        if not cfg.replace_unused or cfg.unused_epochs == 0 or not self.iterations_per_epoch:
            return 0
        return max(1, math.ceil(cfg.unused_epochs * self.iterations_per_epoch))

    def code(self, dictionary: Dictionary, batch, gram=None):
        """!
        @brief Codes one mini-batch.
        @return (signals, codes, draws, splits): the signals as one m x N matrix, their k x N codes, the number of
        draws (signals, or groups in group mode) and the group boundaries (None outside group mode).
        """
        cfg = self.config
        gram = dictionary.gram() if gram is None else gram
        if cfg.group_coding:
            groups = [np.asarray(g, dtype=float).reshape(dictionary.m, -1) for g in batch]
            if not groups:
                raise ValueError("Empty mini-batch.")
            def solve(group):
                return group_lasso_solve(group, dictionary.atoms, cfg.l1_weight, gram=gram)

            if cfg.threads > 1 and len(groups) > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    blocks = list(pool.map(solve, groups))
            else:
                blocks = [solve(g) for g in groups]
            splits = list(np.cumsum([g.shape[1] for g in groups])[:-1])
            return np.hstack(groups), np.hstack(blocks), len(groups), splits
        signals = np.asarray(batch, dtype=float)
        if signals.ndim == 1:
            signals = signals[:, None]
        if signals.shape[0] != dictionary.m or signals.shape[1] == 0:
            raise ValueError(f"Mini-batch of shape {signals.shape} does not fit a dictionary with {dictionary.m} rows.")
        codes = encode(signals, dictionary.atoms, cfg.penalty, cfg.coding_rule, gram, cfg.threads)
        return signals, codes, signals.shape[1], None

    def _rotate_purge(self, state: LearnerState):
        state.stats = state.purge_stats
        state.weight, state.constant = state.purge_weight, state.purge_constant
        state.purge_stats = SurrogateStats.zeros(state.dictionary.m, self.config.k)
        state.purge_weight = state.purge_constant = 0.0
        state.warmup_scale = 0.0
        if state.history is not None:
            for entry in state.history[:state.epoch_mark]:
                entry.weight = 0.0
            state.epoch_mark = len(state.history)

    def step(self, state: LearnerState, batch, epoch_started: bool = False) -> LearnerState:
        """!
        @brief One iteration: code the batch, update the statistics, replace stale atoms, update the dictionary.
        @param state Current state, updated in place and returned.
        @param batch m x eta signals (or a list of eta groups in group mode).
        @param epoch_started The batch begins a new pass over a fixed training set.
        """
        cfg = self.config
        D = state.dictionary
        signals, codes, draws, splits = self.code(D, batch)
        t = state.t + 1
        if state.purge_stats is not None and epoch_started:
            self._rotate_purge(state)

        beta = self.forgetting_factor(t)
        if beta != 1.0:
            state.stats.scale(beta)
            state.weight *= beta
            state.constant *= beta
            state.warmup_scale *= beta
            if state.purge_stats is not None:
                state.purge_stats.scale(beta)
                state.purge_weight *= beta
                state.purge_constant *= beta
            if state.history is not None:
                for entry in state.history:
                    entry.weight *= beta

        gain = (0.5 * float(np.sum(signals * signals)) +
                _penalty_total(codes, state.penalty, splits, state.penalizes_l1)) / draws
        state.stats.accumulate(signals, codes, 1.0 / draws)
        state.weight += 1.0
        state.constant += gain
        if state.purge_stats is not None:
            state.purge_stats.accumulate(signals, codes, 1.0 / draws)
            state.purge_weight += 1.0
            state.purge_constant += gain
        if state.history is not None:
            state.history.append(HistoryEntry(signals.copy(), codes.copy(), draws, splits))

        used = np.any(codes != 0, axis=1)
        state.usage[used] = 0
        state.usage[~used] += 1
        threshold = self.unused_threshold()
        stale = stale_atoms(state.usage, threshold)
        if stale.size:
            source = self._pool if self._pool is not None else signals
            D = replace_unused_atoms(D, state.usage, source, state.rng, threshold)
            state.stats.forget_atoms(stale)
            if state.purge_stats is not None:
                state.purge_stats.forget_atoms(stale)
            state.usage[stale] = 0
            if self.verbose:
                print(f"Iteration {t}: replaced {stale.size} unused atom(s): {', '.join(str(j) for j in stale)}")

        updated = update_dictionary(D, state.stats, cfg.max_sweeps, cfg.update_tol, cfg.ridge)
        state.last_delta = float(np.linalg.norm(updated.atoms - state.dictionary.atoms))
        state.last_nnz = float(np.count_nonzero(codes)) / codes.shape[1]
        state.dictionary = updated
        state.t = t
        return state

    # --- whole runs ----------------------------------------------------------------------------------------------

    def train(self, X, test_set=None, initial_dictionary: Dictionary | None = None):
        """!
        @brief Learns a dictionary from the columns of X.
        @param X Training signals, m x n.
        @param test_set Optional held-out signals for the test objective.
        @param initial_dictionary Starting point; default: k random normalized training columns.
        @return (Dictionary, MetricsTrace).
        """
        X = _check_signals(X, "training set")
        if test_set is not None:
            test_set = _check_signals(test_set, "test set")
            if test_set.shape[0] != X.shape[0]:
                raise ValueError(f"Test signals have {test_set.shape[0]} rows, training signals {X.shape[0]}.")
        cfg = self.config
        D0 = initial_dictionary or random_dictionary(X, cfg.k, cfg.constraint, cfg.rng_seed)
        rng = np.random.default_rng(cfg.rng_seed)
        train_eval = X[:, np.sort(rng.permutation(X.shape[1])[:cfg.eval_size])]
        self._pool = X

        def evaluate(D):
            train_obj = empirical_objective(D, train_eval, cfg.l1_weight, cfg.penalty, cfg.coding_rule)
            test_obj = (empirical_objective(D, test_set, cfg.l1_weight, cfg.penalty, cfg.coding_rule)
                        if test_set is not None else math.nan)
            return train_obj, test_obj

        if cfg.mode == LearnerMode.BATCH:
            return self._run_batch(X, D0, evaluate)
        per_epoch = math.ceil(X.shape[1] / cfg.batch_size)
        total = cfg.iterations or max(1, math.ceil(cfg.epochs * X.shape[1] / cfg.batch_size))
        return self._run(PermutedStream(X, cfg.rng_seed), total, per_epoch, D0, evaluate)

    def train_groups(self, groups, test_groups=None, initial_dictionary: Dictionary | None = None):
        """!
        @brief Learns a dictionary from groups of signals coded jointly (group_coding must be set).
        @param groups List of m x q_i matrices.
        @param test_groups Optional held-out groups.
        @return (Dictionary, MetricsTrace).
        """
        cfg = self.config
        if not cfg.group_coding:
            raise ValueError("train_groups needs a configuration with group_coding enabled.")
        groups = [_check_signals(g, "group") for g in groups]
        if not groups:
            raise ValueError("Empty group source.")
        m = groups[0].shape[0]
        if any(g.shape[0] != m for g in groups):
            raise ValueError("All groups must have the same number of rows.")
        pooled = np.hstack(groups)
        D0 = initial_dictionary or random_dictionary(pooled, cfg.k, cfg.constraint, cfg.rng_seed)
        rng = np.random.default_rng(cfg.rng_seed)
        train_eval = [groups[i] for i in np.sort(rng.permutation(len(groups))[:cfg.eval_size])]
        self._pool = pooled

        def evaluate(D):
            train_obj = group_empirical_objective(D, train_eval, cfg.l1_weight)
            test_obj = group_empirical_objective(D, test_groups, cfg.l1_weight) if test_groups else math.nan
            return train_obj, test_obj

        if cfg.mode == LearnerMode.BATCH:
            return self._run_batch(groups, D0, evaluate)
        per_epoch = math.ceil(len(groups) / cfg.batch_size)
        total = cfg.iterations or max(1, math.ceil(cfg.epochs * len(groups) / cfg.batch_size))
        return self._run(PermutedStream(groups, cfg.rng_seed), total, per_epoch, D0, evaluate)

    def _checkpoint(self, state, elapsed, evaluate) -> CheckpointRecord:
        train_obj, test_obj = evaluate(state.dictionary)
        return CheckpointRecord(state.t, elapsed, train_obj, test_obj, surrogate_objective(state),
                                state.last_nnz, state.last_delta)

    def _run(self, stream: PermutedStream, total: int, per_epoch: int, D0: Dictionary, evaluate):
        cfg = self.config
        self.iterations_per_epoch = per_epoch
        state = self.init(D0)
        trace = MetricsTrace()
        spinner = Spinner("{time} iteration {iter}/{total}, train objective {objective:.6f}", limit=0.5,
                          enabled=self.verbose)
        elapsed = 0.0
        next_checkpoint = 1
        for t in range(1, total + 1):
            batch, epoch_started = stream.next_batch(cfg.batch_size)
            started = time.perf_counter()
            self.step(state, batch, epoch_started)
            elapsed += time.perf_counter() - started
            if t == next_checkpoint or t == total:
                record = self._checkpoint(state, elapsed, evaluate)
                trace.append(record)
                spinner.spin(iter=t, total=total, objective=record.train_obj)
                next_checkpoint = max(t + 1, math.ceil(t * cfg.checkpoint_growth))
        if trace.records:
            spinner.done(iter=total, total=total, objective=trace[-1].train_obj)
        self.state = state
        return state.dictionary, trace

    def _run_batch(self, source, D0: Dictionary, evaluate):
        """Each iteration codes the whole training set and minimizes the resulting quadratic exactly."""
        cfg = self.config
        self.iterations_per_epoch = 1
        state = self.init(D0)
        state.stats = SurrogateStats.zeros(D0.m, cfg.k)
        trace = MetricsTrace()
        total = cfg.iterations or max(1, math.ceil(cfg.epochs))
        spinner = Spinner("{time} batch iteration {iter}/{total}, train objective {objective:.6f}", limit=0.5,
                          enabled=self.verbose)
        elapsed = 0.0
        next_checkpoint = 1
        for t in range(1, total + 1):
            started = time.perf_counter()
            D = state.dictionary
            signals, codes, draws, splits = self.code(D, source)
            state.stats = SurrogateStats.zeros(D.m, cfg.k)
            state.stats.accumulate(signals, codes, 1.0 / draws)
            state.weight = 1.0
            state.constant = (0.5 * float(np.sum(signals * signals)) +
                              _penalty_total(codes, state.penalty, splits, state.penalizes_l1)) / draws
            state.warmup_scale = 0.0
            updated = update_dictionary(D, state.stats, BATCH_MAX_SWEEPS, cfg.update_tol, cfg.ridge)
            state.last_delta = float(np.linalg.norm(updated.atoms - D.atoms))
            state.last_nnz = float(np.count_nonzero(codes)) / codes.shape[1]
            state.dictionary = updated
            state.t = t
            elapsed += time.perf_counter() - started
            if t == next_checkpoint or t == total:
                record = self._checkpoint(state, elapsed, evaluate)
                trace.append(record)
                spinner.spin(iter=t, total=total, objective=record.train_obj)
                next_checkpoint = max(t + 1, math.ceil(t * cfg.checkpoint_growth))
        self.state = state
        return state.dictionary, trace


def _check_signals(X, name) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] == 0 or X.shape[0] == 0:
        raise ValueError(f"The {name} is empty or not an m x n matrix (shape {X.shape}).")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"The {name} contains non-finite values.")
    return X


def init(config: LearnerConfig, initial: Dictionary) -> LearnerState:
    return OnlineLearner(config).init(initial)


def step(state: LearnerState, batch, config: LearnerConfig, epoch_started: bool = False) -> LearnerState:
    return OnlineLearner(config).step(state, batch, epoch_started)


def train(source, config: LearnerConfig, test_set=None, verbose: bool = False):
    """!@brief Convenience wrapper around OnlineLearner(config).train()."""
    return OnlineLearner(config, verbose).train(source, test_set)


def empirical_objective(D, X, l1_weight: float, penalty: PenaltyConfig | None = None,
                        stop: StopRule | None = None) -> float:
    """!
    @brief Mean over the columns of X of min_alpha 1/2||x - D alpha||^2 + lambda ||alpha||_1 (+ elastic term).
    @details With a constrained stop rule the codes come from that rule and only the residual is counted.
    """
    X = _check_signals(X, "evaluation set")
    atoms = np.asarray(getattr(D, "atoms", D), dtype=float)
    penalty = replace(penalty, l1_weight=l1_weight) if penalty is not None else PenaltyConfig(l1_weight)
    codes = encode(X, atoms, penalty, stop)
    penalizes_l1 = stop is None or stop.kind == StopKind.LAMBDA
    return _loss_total(X, codes, atoms, penalty, None, penalizes_l1) / X.shape[1]


def group_empirical_objective(D, groups, l1_weight: float) -> float:
    """!@brief Mean over groups of min_A 1/2||X - D A||_F^2 + lambda sum_j ||A[j, :]||_2."""
    groups = list(groups or [])
    if not groups:
        raise ValueError("No groups to evaluate.")
    atoms = np.asarray(getattr(D, "atoms", D), dtype=float)
    gram = atoms.T @ atoms
    penalty = PenaltyConfig(l1_weight)
    total = 0.0
    for g in groups:
        codes = group_lasso_solve(g, atoms, l1_weight, gram=gram)
        total += _loss_total(np.asarray(g, dtype=float).reshape(atoms.shape[0], -1), codes, atoms, penalty, [])
    return total / len(groups)


def surrogate_objective(state: LearnerState, D=None, code_history=None) -> float:
    """!
    @brief The surrogate at D (default: the current dictionary).
    @details Computed from the statistics, or, when code_history (the state's history entries) is given,
    directly as the discounted average of the stored per-sample losses at the stored codes.
    """
    if state.t == 0 or state.weight <= 0:
        raise ValueError("The surrogate is undefined before the first iteration.")
    atoms = np.asarray(getattr(D, "atoms", D if D is not None else state.dictionary.atoms), dtype=float)
    warm = 0.0
    if state.warmup_scale > 0:
        warm = 0.5 * state.warmup_scale * float(np.sum((atoms - state.initial_atoms) ** 2))
    if code_history is None:
        value = (0.5 * np.sum((atoms.T @ atoms) * state.stats.A) - np.sum(atoms * state.stats.B) + state.constant)
        return float(value) / state.weight
    total = sum(e.weight * _loss_total(e.signals, e.codes, atoms, state.penalty, e.splits, state.penalizes_l1) /
                e.draws for e in code_history)
    return (total + warm) / sum(e.weight for e in code_history)


def processed_objective(state: LearnerState, D=None) -> float:
    """!@brief Discounted average, over every sample seen so far, of the optimal coding loss at D (needs history)."""
    if state.history is None:
        raise ValueError("processed_objective needs a run with keep_history enabled.")
    if state.t == 0:
        raise ValueError("No samples processed yet.")
    atoms = np.asarray(getattr(D, "atoms", D if D is not None else state.dictionary.atoms), dtype=float)
    gram = atoms.T @ atoms
    total = weight = 0.0
    for entry in state.history:
        if entry.weight == 0.0:
            continue
        if entry.splits is None:
            codes = encode(entry.signals, atoms, state.penalty, None, gram)
        else:
            codes = np.hstack([group_lasso_solve(block, atoms, state.penalty.l1_weight, gram=gram)
                               for block in np.split(entry.signals, entry.splits, axis=1)])
        total += entry.weight * _loss_total(entry.signals, codes, atoms, state.penalty, entry.splits) / entry.draws
        weight += entry.weight
    return total / weight
