"""!@file factorization_presets.py
@brief Matrix factorization problems expressed as learner configurations.
@details Dictionary learning, non-negative matrix factorization, non-negative sparse coding, sparse PCA and
group-sparse dictionary learning all run through the same online learner; they only differ in the coding penalty,
the column constraint set and the default preprocessing.
@version 0.1.0
@date_created 2025-03-27
@date_modified 2025-04-03
@author Leland Green
@license MIT
"""
import math
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np

from data_io import preprocess
from dictionary_update import Dictionary
from online_learner import LearnerConfig, MetricsTrace, OnlineLearner
from projections import ConstraintKind, ConstraintSet
from sparse_coding import PenaltyConfig, encode, group_lasso_solve


class FactorizationKind(str, Enum):
    DICT_LEARN = "dict_learn"
    NMF = "nmf"
    NNSC = "nnsc"
    SPCA = "spca"
    GROUP_DICT_LEARN = "group_dict_learn"


@dataclass(frozen=True)
class PresetKind:
    """!
    @brief A factorization problem and its own parameters.
    @details l1_weight None picks the default for the problem (1.2/sqrt(m), or 1/sqrt(m) for nnsc); gamma is the
    l1 weight inside the sparse-PCA column constraint.
    """
    kind: FactorizationKind = FactorizationKind.DICT_LEARN
    l1_weight: float | None = None
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FactorizationKind(self.kind))
        if self.l1_weight is not None and not (np.isfinite(self.l1_weight) and self.l1_weight >= 0):
            raise ValueError(f"l1_weight must be >= 0, got {self.l1_weight}.")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}.")


@dataclass
class FactorizationResult:
    """!@brief Outcome of factorize(): X ~ D codes, with the training trace."""
    dictionary: Dictionary
    codes: np.ndarray
    trace: MetricsTrace
    density: float
    reconstruction_error: float


## Preprocessing (center, normalize) applied by default for each problem.
DEFAULT_PREPROCESSING = {
    FactorizationKind.DICT_LEARN: (True, True),
    FactorizationKind.SPCA: (True, True),
    FactorizationKind.GROUP_DICT_LEARN: (True, True),
    FactorizationKind.NMF: (False, False),
    FactorizationKind.NNSC: (False, False),
}

_LEARNER_FIELDS = {f.name for f in fields(LearnerConfig)}


def _as_preset(preset) -> PresetKind:
    if isinstance(preset, PresetKind):
        return preset
    return PresetKind(FactorizationKind(preset))


def make_preset(preset, m: int, k: int, **overrides) -> LearnerConfig:
    """!
    @brief Builds the LearnerConfig of a factorization problem.
    @param preset A PresetKind or a problem name ("dict_learn", "nmf", "nnsc", "spca", "group_dict_learn").
    @param m Signal dimension, used by the default lambda.
    @param k Number of atoms.
    @param overrides Any other LearnerConfig field. Overrides that break the problem's structure (a positive
    lambda for nmf, a signed constraint or penalty for the non-negative problems) raise ValueError.
    @return The configuration.
    """
    preset = _as_preset(preset)
    if m < 1:
        raise ValueError(f"Signal dimension must be >= 1, got {m}.")
    unknown = set(overrides) - _LEARNER_FIELDS
    if unknown:
        raise ValueError(f"Unknown learner option(s): {', '.join(sorted(unknown))}.")
    for name in ("k", "l1_weight", "group_coding"):
        if name in overrides:
            raise ValueError(f"Set {name} through make_preset's own arguments, not as an override.")
    kind = preset.kind
    lam = preset.l1_weight

    if kind == FactorizationKind.NNSC and lam == 0:
        kind = FactorizationKind.NMF
    if kind == FactorizationKind.SPCA and preset.gamma == 0:
        kind = FactorizationKind.DICT_LEARN

    penalty_given = "penalty" in overrides
    penalty = overrides.pop("penalty", PenaltyConfig())
    constraint = overrides.pop("constraint", None)
    group = False
    if kind == FactorizationKind.NMF:
        if lam not in (None, 0):
            raise ValueError(f"nmf has no sparsity penalty; got l1_weight {lam}.")
        lam = 0.0
    elif kind == FactorizationKind.NNSC:
        lam = 1.0 / math.sqrt(m) if lam is None else lam
    else:
        lam = 1.2 / math.sqrt(m) if lam is None else lam

    if kind in (FactorizationKind.NMF, FactorizationKind.NNSC):
        if constraint is not None and not constraint.nonneg:
            raise ValueError(f"{kind.value} needs a non-negative column constraint.")
        if penalty_given and (not penalty.nonneg or penalty.per_index_weights is not None or penalty.l2_weight > 0):
            raise ValueError(f"{kind.value} uses the plain non-negative lasso penalty.")
        constraint = constraint or ConstraintSet(ConstraintKind.NONNEG_L2_BALL)
        penalty = PenaltyConfig(lam, nonneg=True)
    elif kind == FactorizationKind.SPCA:
        if constraint is not None and constraint.kind != ConstraintKind.FUSED_LASSO_BALL:
            raise ValueError("spca takes its elastic-net constraint from gamma; only a fused-lasso ball may replace it.")
        constraint = constraint or ConstraintSet(ConstraintKind.ELASTIC_NET_BALL, gamma=preset.gamma)
    elif kind == FactorizationKind.GROUP_DICT_LEARN:
        group = True
    constraint = constraint or ConstraintSet()
    return LearnerConfig(k=k, l1_weight=lam, constraint=constraint, penalty=penalty, group_coding=group, **overrides)


def factorize(X, preset, k: int | None = None, test_set=None, center: bool | None = None,
              normalize: bool | None = None, verbose: bool = False, **overrides) -> FactorizationResult:
    """!
    @brief Learns X ~ D codes for one of the factorization problems.
    @param X Data, m x n (one sample per column).
    @param preset Problem (PresetKind or name).
    @param k Number of atoms, default m.
    @param test_set Optional held-out columns (preprocessed the same way).
    @param center Override the problem's default centering.
    @param normalize Override the problem's default column normalization.
    @param verbose Print progress.
    @param overrides LearnerConfig fields.
    @return FactorizationResult with the dictionary, the codes of the (preprocessed) data, the trace, the
    dictionary density and the mean reconstruction error 1/(2n)||X - D codes||_F^2.
    """
    preset = _as_preset(preset)
    if preset.kind == FactorizationKind.GROUP_DICT_LEARN:
        raise ValueError("Use group_factorize for group_dict_learn.")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError(f"Expected a non-empty m x n matrix, got shape {X.shape}.")
    if not np.all(np.isfinite(X)):
        raise ValueError("Data contains non-finite values.")
    default_center, default_normalize = DEFAULT_PREPROCESSING[preset.kind]
    center = default_center if center is None else center
    normalize = default_normalize if normalize is None else normalize
    if preset.kind in (FactorizationKind.NMF, FactorizationKind.NNSC):
        if center:
            raise ValueError(f"{preset.kind.value} needs non-negative data; centering is not allowed.")
        if X.min() < 0:
            raise ValueError(f"{preset.kind.value} needs non-negative data.")
    data = preprocess(X, center, normalize)
    if test_set is not None:
        test_set = preprocess(test_set, center, normalize)
    config = make_preset(preset, data.shape[0], k or data.shape[0], **overrides)
    learner = OnlineLearner(config, verbose)
    dictionary, trace = learner.train(data, test_set)
    codes = encode(data, dictionary.atoms, config.penalty, config.coding_rule, threads=config.threads)
    residual = data - dictionary.atoms @ codes
    error = 0.5 * float(np.sum(residual * residual)) / data.shape[1]
    if verbose:
        print(f"{preset.kind.value}: {dictionary.k} atoms, density {dictionary.density():.4f}, "
              f"reconstruction error {error:.6g}")
    return FactorizationResult(dictionary, codes, trace, dictionary.density(), error)


def group_factorize(groups, preset=FactorizationKind.GROUP_DICT_LEARN, k: int | None = None, test_groups=None,
                    normalize: bool | None = None, verbose: bool = False, **overrides):
    """!
    @brief Group-sparse dictionary learning: every group of signals shares one support.
    @param groups List of m x q_i matrices.
    @param normalize Scale each signal to unit norm (default on; centering is not applied to groups).
    @return (Dictionary, list of k x q_i codes, MetricsTrace).
    """
    preset = _as_preset(preset)
    if preset.kind != FactorizationKind.GROUP_DICT_LEARN:
        raise ValueError(f"group_factorize runs group_dict_learn, not {preset.kind.value}.")
    groups = [np.asarray(g, dtype=float).reshape(np.shape(g)[0], -1) for g in groups]
    if not groups:
        raise ValueError("Empty group source.")
    normalize = DEFAULT_PREPROCESSING[preset.kind][1] if normalize is None else normalize
    groups = [preprocess(g, center=False, normalize=normalize) for g in groups]
    if test_groups is not None:
        test_groups = [preprocess(g, center=False, normalize=normalize) for g in test_groups]
    m = groups[0].shape[0]
    config = make_preset(preset, m, k or m, **overrides)
    learner = OnlineLearner(config, verbose)
    dictionary, trace = learner.train_groups(groups, test_groups)
    gram = dictionary.gram()
    codes = [group_lasso_solve(g, dictionary.atoms, config.l1_weight, gram=gram) for g in groups]
    return dictionary, codes, trace
