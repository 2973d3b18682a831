import math

import numpy as np
import pytest

from todsim.agents import PolicyParameters, TraceRecord, TurnTrace
from todsim.corpus import sample_goals
from todsim.errors import ConfigurationError, PreconditionError, TrainingDivergedError
from todsim.goal_tracker import TerminationConfig
from todsim.rl import (
    RLConfig,
    compute_reward,
    evaluate_success,
    run_episode,
    train_alternating,
    turn_gradient,
)


def softmax(logits):
    z = np.exp(logits - logits.max())
    return z / z.sum()


def make_trace(weights, feature_sets, chosen, rng=None):
    """Build a trace consistent with the given weights."""
    records = []
    for feats, a in zip(feature_sets, chosen):
        idx = np.asarray(sorted(feats), dtype=np.int64)
        probs = softmax(weights[:, idx].sum(axis=1) if idx.size
                        else np.zeros(weights.shape[0]))
        records.append(TraceRecord(tuple(int(i) for i in idx), a,
                                   math.log(probs[a]), probs))
    return TurnTrace(records)


def discounted_logprob_objective(weights, feature_sets, chosen, r_t, gamma):
    """Independent objective: sum_i gamma^(n-i) * R * log pi_i, i = 1..n."""
    n = len(chosen)
    total = 0.0
    for i, (feats, a) in enumerate(zip(feature_sets, chosen)):
        idx = sorted(feats)
        logits = weights[:, idx].sum(axis=1) if idx else np.zeros(weights.shape[0])
        probs = softmax(logits)
        total += gamma ** (n - 1 - i) * r_t * math.log(probs[a])
    return total


def finite_difference_grad(weights, feature_sets, chosen, r_t, gamma, step=1e-5):
    grad = np.zeros_like(weights)
    for r in range(weights.shape[0]):
        for c in range(weights.shape[1]):
            up = weights.copy()
            up[r, c] += step
            down = weights.copy()
            down[r, c] -= step
            grad[r, c] = (
                discounted_logprob_objective(up, feature_sets, chosen, r_t, gamma)
                - discounted_logprob_objective(down, feature_sets, chosen, r_t, gamma)
            ) / (2 * step)
    return grad


def make_params(n_tokens, n_features, weights, role="simulator"):
    vocab = tuple(f"tok{i}" for i in range(n_tokens - 1)) + ("end",)
    names = tuple(f"f{i}" for i in range(n_features))
    return PolicyParameters(role, vocab, "test-schema", names, weights)


class TestComputeRewardArithmetic:
    def test_plain_setting(self, bundle, interactive_session_factory):
        session = interactive_session_factory(bundle.goals[0])
        cfg = RLConfig(alpha=0.0, beta=0.0)
        reward = compute_reward(session, bundle.db, cfg)
        assert reward.success == 1
        assert reward.total == 1.0

    def test_sent_setting_worked_example(self, bundle, interactive_session_factory):
        session = interactive_session_factory(bundle.goals[0])

        class FixedLM:
            def score_text(self, text):
                return 0.8

        cfg = RLConfig(alpha=0.1, beta=0.0)
        reward = compute_reward(session, bundle.db, cfg, lm=FixedLM())
        assert reward.total == pytest.approx(1.125, abs=1e-12)

    def test_sess_setting_worked_example(self, bundle, interactive_session_factory):
        session = interactive_session_factory(bundle.goals[0])

        class FixedPair:
            def score_pair(self, left, right):
                return 0.95

        cfg = RLConfig(alpha=0.0, beta=0.1)
        reward = compute_reward(session, bundle.db, cfg, clf=FixedPair())
        assert reward.total == pytest.approx(1.095, abs=1e-12)

    def test_sent_floor_bounds_the_inverse_term(self, bundle,
                                                interactive_session_factory):
        session = interactive_session_factory(bundle.goals[0])

        class TinyLM:
            def score_text(self, text):
                return 1e-9

        cfg = RLConfig(alpha=0.1, beta=0.0, sent_floor=0.1)
        reward = compute_reward(session, bundle.db, cfg, lm=TinyLM())
        assert reward.total == pytest.approx(1.0 + 0.1 / 0.1)

    def test_missing_scorer_rejected(self, bundle, interactive_session_factory):
        session = interactive_session_factory(bundle.goals[0])
        with pytest.raises(ConfigurationError):
            compute_reward(session, bundle.db, RLConfig(alpha=0.1))
        with pytest.raises(ConfigurationError):
            compute_reward(session, bundle.db, RLConfig(beta=0.1))

    def test_monotonicity_over_random_triples(self):
        rng = np.random.default_rng(0)
        cfg = RLConfig(alpha=0.1, beta=0.1)
        for _ in range(1000):
            success = int(rng.integers(0, 2))
            sent = float(rng.uniform(0.01, 3.0))
            sess = float(rng.uniform(0.0, 1.0))
            total = success + cfg.alpha / max(sent, cfg.sent_floor) + cfg.beta * sess
            bigger_sent = success + cfg.alpha / max(sent + 0.5, cfg.sent_floor) \
                + cfg.beta * sess
            bigger_sess = success + cfg.alpha / max(sent, cfg.sent_floor) \
                + cfg.beta * min(sess + 0.1, 1.0)
            assert bigger_sent <= total
            assert bigger_sess >= total


class TestTurnGradient:
    def test_zero_reward_zero_gradient(self):
        weights = np.random.default_rng(0).normal(size=(5, 4))
        params = make_params(5, 4, weights)
        trace = make_trace(weights, [{0, 1}], [2])
        assert np.all(turn_gradient(trace, params, 0.0, 0.99) == 0.0)

    def test_softmax_of_zeros_single_token(self):
        weights = np.zeros((2, 1))
        params = make_params(2, 1, weights)
        trace = make_trace(weights, [{0}], [0])
        grad = turn_gradient(trace, params, 1.0, 0.99)
        assert grad[0, 0] == pytest.approx(0.5)
        assert grad[1, 0] == pytest.approx(-0.5)

    def test_position_weights_for_three_tokens(self):
        # gamma^(n-i) for i = 1, 2, 3 of 3: 0.9801, 0.99, 1.0
        weights = np.zeros((3, 3))
        params = make_params(3, 3, weights)
        trace = make_trace(weights, [{0}, {1}, {2}], [0, 1, 2])
        grad = turn_gradient(trace, params, 1.0, 0.99)
        uniform = 1.0 / 3.0
        assert grad[0, 0] == pytest.approx(0.9801 * (1 - uniform), abs=1e-12)
        assert grad[1, 1] == pytest.approx(0.99 * (1 - uniform), abs=1e-12)
        assert grad[2, 2] == pytest.approx(1.0 * (1 - uniform), abs=1e-12)

    def test_linear_in_reward(self):
        rng = np.random.default_rng(3)
        weights = rng.normal(size=(6, 5))
        params = make_params(6, 5, weights)
        trace = make_trace(weights, [{0, 2}, {1}], [3, 4])
        g1 = turn_gradient(trace, params, 1.0, 0.97)
        g3 = turn_gradient(trace, params, 3.0, 0.97)
        assert np.allclose(g3, 3.0 * g1, atol=1e-12)

    def test_gamma_one_undiscounted(self):
        rng = np.random.default_rng(4)
        weights = rng.normal(size=(4, 3))
        params = make_params(4, 3, weights)
        trace = make_trace(weights, [{0}, {0}], [1, 1])
        grad = turn_gradient(trace, params, 1.0, 1.0)
        one = turn_gradient(TurnTrace(trace.records[:1]), params, 1.0, 1.0)
        assert np.allclose(grad, 2.0 * one, atol=1e-12)

    def test_matches_finite_differences_randomized(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            n_tokens = int(rng.integers(2, 7))
            n_features = int(rng.integers(1, 6))
            n_steps = int(rng.integers(1, 5))
            weights = rng.normal(scale=0.7, size=(n_tokens, n_features))
            feature_sets = []
            chosen = []
            for _ in range(n_steps):
                k = int(rng.integers(0, n_features + 1))
                feature_sets.append(set(rng.choice(n_features, size=k, replace=False)
                                        .tolist()))
                chosen.append(int(rng.integers(n_tokens)))
            r_t = float(rng.uniform(0.2, 2.0))
            gamma = float(rng.uniform(0.9, 1.0))
            params = make_params(n_tokens, n_features, weights)
            trace = make_trace(weights, feature_sets, chosen)
            analytic = turn_gradient(trace, params, r_t, gamma)
            numeric = finite_difference_grad(weights, feature_sets, chosen, r_t, gamma)
            scale = np.abs(numeric)
            mask = scale > 1e-8
            if mask.any():
                rel = np.abs(analytic - numeric)[mask] / scale[mask]
                worst = max(worst, float(rel.max()))
            assert np.allclose(analytic, numeric, atol=1e-7)
        assert worst < 1e-4

    def test_shape_mismatch_rejected(self):
        weights = np.zeros((4, 3))
        params = make_params(4, 3, weights)
        bad = TurnTrace([TraceRecord((0,), 1, 0.0, np.full(7, 1 / 7))])
        with pytest.raises(PreconditionError):
            turn_gradient(bad, params, 1.0, 0.99)


class TestRunEpisode:
    def test_deterministic_given_seed(self, bundle):
        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        cfg = RLConfig()
        a = run_episode(sim, sys_, bundle.goals[0], bundle.db, cfg, seed=99)
        b = run_episode(sim, sys_, bundle.goals[0], bundle.db, cfg, seed=99)
        assert a[0] == b[0]
        assert a[2] == b[2]
        assert [r.chosen for _, t in a[1] for r in t.records] == \
            [r.chosen for _, t in b[1] for r in t.records]

    def test_immediate_farewell_no_success(self, bundle):
        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        bye = sim.action_vocabulary.index("bye")
        sim.weights[bye, sim.feature_names.index("turn_bucket:0")] = 1000.0
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        session, traces, reward = run_episode(sim, sys_, bundle.goals[0], bundle.db,
                                              RLConfig(), seed=0)
        assert reward.success == 0
        assert reward.total == 0.0
        assert session.termination == "farewell_act"

    def test_traces_cover_both_roles(self, bundle):
        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        _, traces, _ = run_episode(sim, sys_, bundle.goals[0], bundle.db, RLConfig(),
                                   seed=1)
        roles = {role for role, _ in traces}
        assert roles == {"simulator", "system"}


class TestTrainAlternating:
    def _tiny_cfg(self, **kw):
        base = dict(epochs=1, goals_per_epoch=4, episodes_per_phase=4, seed=0)
        base.update(kw)
        return RLConfig(**base)

    def test_learning_rate_zero_equivalent_unchanged(self, bundle):
        # the smallest legal step with reward forced to zero: weights stay put
        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        bye = sim.action_vocabulary.index("bye")
        sim.weights[bye, sim.feature_names.index("turn_bucket:0")] = 1000.0
        cfg = self._tiny_cfg()
        result = train_alternating(sim, sys_, bundle.goals[:4], bundle.db, cfg)
        # every episode ends with reward 0 (immediate farewell), so no update
        assert np.array_equal(result.sim_params.weights, sim.weights)
        assert np.array_equal(result.sys_params.weights, sys_.weights)

    def test_inputs_never_mutated(self, bundle):
        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        before_sim = sim.weights.copy()
        before_sys = sys_.weights.copy()
        train_alternating(sim, sys_, bundle.goals[:4], bundle.db, self._tiny_cfg())
        assert np.array_equal(sim.weights, before_sim)
        assert np.array_equal(sys_.weights, before_sys)

    def test_freeze_contract_per_phase(self, bundle, monkeypatch):
        """Within phase 1 the system weights never move; within phase 2 the
        simulator weights never move."""
        import todsim.rl as rl_mod

        snapshots = []
        original = rl_mod.run_episode

        def spy(sim_params, sys_params, *args, **kwargs):
            snapshots.append((sim_params.weights.tobytes(),
                              sys_params.weights.tobytes()))
            return original(sim_params, sys_params, *args, **kwargs)

        monkeypatch.setattr(rl_mod, "run_episode", spy)
        cfg = self._tiny_cfg(epochs=2, goals_per_epoch=3, episodes_per_phase=3)
        train_alternating(PolicyParameters.zeros("simulator", bundle.ontology),
                          PolicyParameters.zeros("system", bundle.ontology),
                          bundle.goals[:3], bundle.db, cfg)
        per_phase = 3
        phases = [snapshots[i:i + per_phase]
                  for i in range(0, len(snapshots), per_phase)]
        for pi, phase in enumerate(phases):
            frozen_side = 1 if pi % 2 == 0 else 0  # phase 1 freezes the system
            frozen = {snap[frozen_side] for snap in phase}
            assert len(frozen) == 1

    def test_divergence_guard(self, bundle):
        from todsim.domain import Goal

        sim = PolicyParameters.zeros("simulator", bundle.ontology)
        sys_ = PolicyParameters.zeros("system", bundle.ontology)
        # an empty goal succeeds immediately, so every episode applies a step
        cfg = self._tiny_cfg(learning_rate=1.0, divergence_limit=1e-4)
        with pytest.raises(TrainingDivergedError) as err:
            train_alternating(sim, sys_, [Goal({})], bundle.db, cfg)
        assert "max_weight" in err.value.diagnostics

    def test_log_shape(self, bundle):
        cfg = self._tiny_cfg(epochs=2)
        result = train_alternating(PolicyParameters.zeros("simulator", bundle.ontology),
                                   PolicyParameters.zeros("system", bundle.ontology),
                                   bundle.goals[:4], bundle.db, cfg)
        assert [(e.epoch, e.phase) for e in result.log] == \
            [(0, 1), (0, 2), (1, 1), (1, 2)]
        for e in result.log:
            assert 0.0 <= e.success_rate <= 1.0
            assert e.mean_sent is None and e.mean_sess is None


def test_evaluate_success_runs(bundle):
    sim = PolicyParameters.zeros("simulator", bundle.ontology)
    sys_ = PolicyParameters.zeros("system", bundle.ontology)
    goals = sample_goals(bundle.ontology, bundle.db, 10, seed=1)
    rate = evaluate_success(sim, sys_, goals, bundle.db, seed=0,
                            term_cfg=TerminationConfig(max_turns=6))
    assert 0.0 <= rate <= 1.0


def test_dev_selection_returns_best_snapshot(bundle, monkeypatch):
    import todsim.rl as rl_mod
    from todsim.corpus import sample_goals

    pool = sample_goals(bundle.ontology, bundle.db, 8, seed=50, min_requests=1,
                        max_requests=1, booking_prob=0.0, multi_domain_prob=0.0)
    dev = sample_goals(bundle.ontology, bundle.db, 6, seed=51, min_requests=1,
                       max_requests=1, booking_prob=0.0, multi_domain_prob=0.0)
    dev_rates = iter([0.5, 0.9, 0.2])
    snapshots = []

    real_evaluate = rl_mod.evaluate_success

    def fake_evaluate(sim_params, sys_params, goals, db, seed, term_cfg=None,
                      max_tokens=4):
        assert list(goals) == dev[:3]  # first half by index
        snapshots.append((sim_params.weights.copy(), sys_params.weights.copy()))
        return next(dev_rates)

    monkeypatch.setattr(rl_mod, "evaluate_success", fake_evaluate)
    cfg = RLConfig(epochs=3, goals_per_epoch=10, episodes_per_phase=10, seed=2,
                   max_tokens=3)
    sim0 = PolicyParameters.zeros("simulator", bundle.ontology)
    sys0 = PolicyParameters.zeros("system", bundle.ontology)
    result = train_alternating(sim0, sys0, pool, bundle.db, cfg, dev_goals=dev)
    monkeypatch.setattr(rl_mod, "evaluate_success", real_evaluate)
    # the best dev rate was after epoch 1: those weights must be returned
    assert np.array_equal(result.sim_params.weights, snapshots[1][0])
    assert np.array_equal(result.sys_params.weights, snapshots[1][1])
