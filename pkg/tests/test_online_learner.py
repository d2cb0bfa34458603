import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_dictionary_matrix
from data_io import preprocess, synth_planted
from dictionary_update import Dictionary
from online_learner import (CheckpointRecord, LearnerConfig, LearnerMode, MetricsTrace, OnlineLearner,
                            empirical_objective, init, processed_objective, step, surrogate_objective, train)
from projections import ConstraintKind, ConstraintSet
from sparse_coding import PenaltyConfig, StopRule, encode


@pytest.fixture
def learner_config():
    return LearnerConfig(k=8, l1_weight=0.15, batch_size=20, rng_seed=3)


class TestConfig:
    def test_penalty_mirrors_lambda(self):
        config = LearnerConfig(l1_weight=0.3, penalty=PenaltyConfig(0.9, 0.1))
        assert config.penalty.l1_weight == 0.3
        assert config.penalty.l2_weight == 0.1

    @pytest.mark.parametrize("changes", [
        dict(k=0), dict(batch_size=0), dict(l1_weight=-1.0), dict(forget_exponent=-0.5), dict(epochs=0),
        dict(checkpoint_growth=1.0), dict(threads=0), dict(forget_start=0),
    ])
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            LearnerConfig(**changes)

    def test_group_coding_needs_plain_penalty(self):
        with pytest.raises(ValueError):
            LearnerConfig(group_coding=True, penalty=PenaltyConfig(nonneg=True))
        with pytest.raises(ValueError):
            LearnerConfig(group_coding=True, coding_rule=StopRule.l1_budget(1.0))

    def test_mode_from_text(self):
        assert LearnerConfig(mode="batch").mode == LearnerMode.BATCH

    def test_constrained_rule_drops_l1_term(self):
        assert not LearnerConfig(coding_rule=StopRule.residual(0.1)).penalizes_l1
        assert LearnerConfig().penalizes_l1


class TestSteps:
    def test_forgetting_factor(self):
        learner = OnlineLearner(LearnerConfig(forget_exponent=1.0, forget_start=3))
        assert learner.forgetting_factor(2) == 1.0
        assert learner.forgetting_factor(4) == pytest.approx(0.75)
        assert OnlineLearner(LearnerConfig()).forgetting_factor(50) == 1.0

    def test_warmup_initialization(self, rng):
        config = LearnerConfig(k=3, warmup=2.0)
        D0 = Dictionary(random_dictionary_matrix(rng, 5, 3))
        state = init(config, D0)
        assert_allclose(state.stats.A, 2.0 * np.eye(3))
        assert_allclose(state.stats.B, 2.0 * D0.atoms)
        assert state.warmup_scale == 2.0
        assert state.t == 0 and state.weight == 0.0

    def test_single_step_statistics(self, rng):
        config = LearnerConfig(k=3, l1_weight=0.1, replace_unused=False)
        D0 = Dictionary(random_dictionary_matrix(rng, 5, 3))
        batch = rng.standard_normal((5, 4))
        state = step(init(config, D0), batch, config)
        codes = encode(batch, D0.atoms, config.penalty)
        assert_allclose(state.stats.A, codes @ codes.T / 4)
        assert_allclose(state.stats.B, batch @ codes.T / 4)
        assert state.t == 1 and state.weight == 1.0
        assert state.dictionary.is_feasible(tol=1e-10)
        assert state.last_nnz == pytest.approx(np.count_nonzero(codes) / 4)

    def test_wrong_initial_size(self, rng):
        with pytest.raises(ValueError):
            init(LearnerConfig(k=4), Dictionary(random_dictionary_matrix(rng, 5, 3)))

    def test_surrogate_undefined_before_first_step(self, rng):
        state = init(LearnerConfig(k=3), Dictionary(random_dictionary_matrix(rng, 5, 3)))
        with pytest.raises(ValueError):
            surrogate_objective(state)


class TestSurrogate:
    @pytest.mark.parametrize("rho", [0.0, 1.0])
    def test_surrogate_dominates_processed_objective(self, planted, learner_config, rho):
        X, _ = planted
        config = replace(learner_config, forget_exponent=rho, epochs=2.0, keep_history=True, replace_unused=False)
        learner = OnlineLearner(config)
        learner.train(X)
        state = learner.state
        surrogate = surrogate_objective(state)
        assert surrogate >= processed_objective(state) - 1e-12
        assert surrogate == pytest.approx(surrogate_objective(state, code_history=state.history), rel=1e-9)

    def test_warmup_term_is_part_of_surrogate(self, planted, learner_config):
        X, _ = planted
        config = replace(learner_config, warmup=3.0, iterations=5, keep_history=True, replace_unused=False)
        learner = OnlineLearner(config)
        learner.train(X)
        state = learner.state
        assert surrogate_objective(state) == pytest.approx(surrogate_objective(state, code_history=state.history),
                                                           rel=1e-9)

    def test_purge_keeps_only_the_last_epoch(self, planted):
        X = planted[0][:, :40]
        config = LearnerConfig(k=6, l1_weight=0.15, batch_size=10, iterations=10, purge_fixed_dataset=True,
                               keep_history=True, replace_unused=False, rng_seed=1)
        learner = OnlineLearner(config)
        learner.train(X)
        state = learner.state
        weights = [entry.weight for entry in state.history]
        assert weights == [0.0] * 4 + [1.0] * 6
        A = sum(e.codes @ e.codes.T / e.draws for e in state.history[4:])
        assert_allclose(state.stats.A, A, atol=1e-12)
        assert state.weight == 6.0
        assert surrogate_objective(state) == pytest.approx(surrogate_objective(state, code_history=state.history),
                                                           rel=1e-9)

    def test_statistics_are_scaled_history(self, planted):
        rho, iterations = 0.7, 12
        config = LearnerConfig(k=8, l1_weight=0.15, batch_size=20, iterations=iterations, forget_exponent=rho,
                               forget_start=2, keep_history=True, replace_unused=False, rng_seed=3)
        learner = OnlineLearner(config)
        learner.train(planted[0])
        state = learner.state
        scales = [(i / iterations) ** rho for i in range(1, iterations + 1)]
        A = sum(s * e.codes @ e.codes.T / e.draws for s, e in zip(scales, state.history))
        B = sum(s * e.signals @ e.codes.T / e.draws for s, e in zip(scales, state.history))
        assert_allclose(state.stats.A, A, atol=1e-12)
        assert_allclose(state.stats.B, B, atol=1e-12)
        assert state.weight == pytest.approx(sum(scales), rel=1e-12)

    def test_processed_objective_needs_history(self, planted, learner_config):
        learner = OnlineLearner(replace(learner_config, iterations=2))
        learner.train(planted[0])
        with pytest.raises(ValueError):
            processed_objective(learner.state)


class TestTraining:
    def test_checkpoint_schedule(self, planted, learner_config):
        _, trace = OnlineLearner(replace(learner_config, iterations=20)).train(planted[0])
        assert_array_equal(trace.column("iter"), [1, 2, 3, 5, 8, 12, 18, 20])
        assert np.all(np.diff(trace.column("wall_clock_s")) >= 0)

    def test_iterations_from_epochs(self, planted, learner_config):
        _, trace = OnlineLearner(replace(learner_config, epochs=1.5)).train(planted[0])
        assert trace[-1].iteration == math.ceil(1.5 * 600 / 20)

    def test_objective_improves(self, planted, learner_config):
        X, _ = planted
        train_X, test_X = X[:, :500], X[:, 500:]
        dictionary, trace = train(train_X, replace(learner_config, epochs=3.0), test_set=test_X)
        assert trace[-1].train_obj < trace[0].train_obj
        assert trace[-1].test_obj < trace[0].test_obj
        assert dictionary.is_feasible(tol=1e-10)
        assert trace[-1].test_obj == pytest.approx(empirical_objective(dictionary, test_X, 0.15), rel=1e-12)

    def test_codes_are_sparse(self, planted, learner_config):
        X, _ = planted
        _, trace = train(X, replace(learner_config, epochs=2.0))
        assert 1.0 <= trace[-1].mean_nnz <= 8.0

    def test_deterministic(self, planted, learner_config):
        X, _ = planted
        config = replace(learner_config, iterations=15, threads=2)
        first, trace_a = OnlineLearner(config).train(X)
        second, trace_b = OnlineLearner(config).train(X)
        assert_array_equal(first.atoms, second.atoms)
        for a, b in zip(trace_a, trace_b):
            assert (a.iteration, a.train_obj, a.surrogate_obj, a.mean_nnz) == \
                   (b.iteration, b.train_obj, b.surrogate_obj, b.mean_nnz)

    def test_batch_mode_is_monotone(self, planted, learner_config):
        X = planted[0][:, :200]
        config = replace(learner_config, mode=LearnerMode.BATCH, iterations=4)
        _, trace = OnlineLearner(config).train(X)
        assert len(trace) == 4
        objectives = trace.column("train_obj")
        assert np.all(np.diff(objectives) <= 1e-9)

    def test_nonnegative_learning(self, planted):
        X = np.abs(planted[0])
        config = LearnerConfig(k=6, l1_weight=0.1, batch_size=20, iterations=10,
                               penalty=PenaltyConfig(nonneg=True),
                               constraint=ConstraintSet(ConstraintKind.NONNEG_L2_BALL))
        dictionary, _ = train(X, config)
        assert np.all(dictionary.atoms >= 0)

    def test_constrained_coding_rule(self, planted, learner_config):
        X, _ = planted
        config = replace(learner_config, coding_rule=StopRule.l1_budget(1.0), iterations=10)
        dictionary, trace = train(X, config)
        assert np.isfinite(trace[-1].train_obj)
        codes = encode(X[:, :20], dictionary.atoms, config.penalty, config.coding_rule)
        assert np.all(np.abs(codes).sum(axis=0) <= 1.0 + 1e-9)

    def test_rejects_bad_data(self, learner_config):
        with pytest.raises(ValueError):
            OnlineLearner(learner_config).train(np.full((4, 10), np.nan))

    def test_dictionary_steps_shrink_like_one_over_t(self, planted):
        X = planted[0]
        config = LearnerConfig(k=8, l1_weight=0.15, batch_size=10, replace_unused=False, rng_seed=4)
        learner = OnlineLearner(config)
        state = learner.init(Dictionary(X[:, :8] / np.linalg.norm(X[:, :8], axis=0)))
        scaled = []
        for t in range(1, 801):
            start = (t - 1) * 10 % X.shape[1]
            learner.step(state, X[:, start:start + 10])
            scaled.append(t * state.last_delta)
        early, late = np.mean(scaled[49:99]), np.mean(scaled[399:])
        assert late <= 1.5 * early


class TestAtomReplacement:
    def test_unused_atom_is_replaced(self, rng):
        X = np.vstack([rng.standard_normal((3, 20)), np.zeros((1, 20))])
        X = preprocess(X, center=False)
        config = LearnerConfig(k=4, l1_weight=0.1, batch_size=5, iterations=12, unused_epochs=0.5, rng_seed=2)
        learner = OnlineLearner(config)
        dictionary, _ = learner.train(X, initial_dictionary=Dictionary(np.eye(4)))
        assert learner.unused_threshold() == 2
        assert abs(dictionary.atoms[3, 3]) < 1e-12
        assert np.linalg.norm(dictionary.atoms[:3, 3]) > 1e-6

    def test_disabled(self, rng):
        X = preprocess(np.vstack([rng.standard_normal((3, 20)), np.zeros((1, 20))]), center=False)
        config = LearnerConfig(k=4, l1_weight=0.1, batch_size=5, iterations=12, replace_unused=False)
        dictionary, _ = OnlineLearner(config).train(X, initial_dictionary=Dictionary(np.eye(4)))
        assert_array_equal(dictionary.atoms[:, 3], [0, 0, 0, 1])


class TestGroupLearning:
    def test_single_signal_groups_match_plain_learning(self, planted):
        X = planted[0][:, :200]
        plain = LearnerConfig(k=6, l1_weight=0.15, batch_size=10, iterations=12, rng_seed=3)
        grouped = replace(plain, group_coding=True)
        d_plain, t_plain = OnlineLearner(plain).train(X)
        d_group, t_group = OnlineLearner(grouped).train_groups([X[:, [i]] for i in range(X.shape[1])])
        assert_allclose(d_group.atoms, d_plain.atoms, atol=1e-9)
        assert_allclose(t_group.column("train_obj"), t_plain.column("train_obj"), rtol=1e-9)
        assert_allclose(t_group.column("surrogate_obj"), t_plain.column("surrogate_obj"), rtol=1e-9)

    def test_group_training(self):
        from data_io import synth_grouped
        groups, _ = synth_grouped(10, 6, 60, 4, 2, noise=0.01, rng_seed=5)
        config = LearnerConfig(k=6, l1_weight=0.2, batch_size=8, iterations=15, group_coding=True,
                               keep_history=True, replace_unused=False)
        learner = OnlineLearner(config)
        dictionary, trace = learner.train_groups(groups[:50], groups[50:])
        assert np.isfinite(trace[-1].test_obj)
        assert surrogate_objective(learner.state) >= processed_objective(learner.state) - 1e-12

    def test_needs_group_config(self):
        with pytest.raises(ValueError):
            OnlineLearner(LearnerConfig(k=2)).train_groups([np.ones((3, 2))])


class TestMetricsTrace:
    def test_order_is_enforced(self):
        trace = MetricsTrace([CheckpointRecord(1, 0.1, 1.0, 1.0, 1.0, 2.0, 0.1)])
        with pytest.raises(ValueError):
            trace.append(CheckpointRecord(1, 0.2, 1.0, 1.0, 1.0, 2.0, 0.1))

    def test_csv(self, tmp_path):
        trace = MetricsTrace([CheckpointRecord(1, 0.123456789, 0.5, math.nan, 0.25, 3.0, 0.1),
                              CheckpointRecord(4, 0.5, 0.4, 0.45, 0.2, 2.5, 0.05)])
        path = tmp_path / "metrics.csv"
        trace.write_csv(path)
        assert path.read_text().splitlines()[0] == ",".join(MetricsTrace.COLUMNS)
        loaded = MetricsTrace.read_csv(path)
        assert_array_equal(loaded.column("iter"), [1, 4])
        assert loaded[0].wall_clock_s == pytest.approx(0.123457)
        assert math.isnan(loaded[0].test_obj)
        assert loaded[1].train_obj == 0.4


@pytest.mark.slow
class TestDeskScale:
    def test_surrogate_gap_shrinks(self):
        X, _ = synth_planted(16, 8, 10000, 3, noise=0.05, rng_seed=11)
        X = preprocess(X, center=False)
        config = LearnerConfig(k=8, l1_weight=0.15, batch_size=10, iterations=1000, keep_history=True,
                               replace_unused=False, rng_seed=4)
        learner = OnlineLearner(config)
        learner.iterations_per_epoch = 1000
        D0 = Dictionary(X[:, :8] / np.linalg.norm(X[:, :8], axis=0))
        state = learner.init(D0)
        gaps = {}
        for t in range(1, 1001):
            learner.step(state, X[:, (t - 1) * 10:t * 10])
            if t in (10, 100, 1000):
                gaps[t] = surrogate_objective(state) - processed_objective(state)
                assert gaps[t] >= -1e-12
        assert gaps[1000] < gaps[10]

    def test_online_reaches_batch_objective_sooner(self):
        X, _ = synth_planted(64, 64, 11000, 10, noise=0.05, rng_seed=21)
        X = preprocess(X, center=False)
        train_X, test_X = X[:, :10000], X[:, 10000:]
        base = LearnerConfig(k=64, l1_weight=1.2 / math.sqrt(64), rng_seed=5)
        _, batch_trace = train(train_X, replace(base, mode=LearnerMode.BATCH, iterations=10), test_X)
        _, online_trace = train(train_X, replace(base, batch_size=128, epochs=5.0), test_X)
        assert online_trace[-1].wall_clock_s < batch_trace[-1].wall_clock_s
        assert online_trace[-1].test_obj <= 1.01 * batch_trace[-1].test_obj

    def test_sparsity_level(self):
        X, _ = synth_planted(64, 64, 10000, 10, noise=0.05, rng_seed=22)
        X = preprocess(X, center=False)
        config = LearnerConfig(k=64, l1_weight=1.2 / math.sqrt(64), batch_size=128, rng_seed=6)
        _, trace = train(X, config)
        assert 5.0 <= trace[-1].mean_nnz <= 20.0
