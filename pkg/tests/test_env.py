"""Simulator tests: reset semantics, step ordering effects, budget gating,
determinism, replay tuples, and belief-truth consistency."""

import numpy as np
import pytest

from lcplan.constraints import BudgetSpec
from lcplan.costs import LossTable, step_cost
from lcplan.deterioration import FAILED, INTACT, MaintenanceAction
from lcplan.env import (
    ACTION_SET,
    N_ACTIONS,
    Env,
    JointAction,
    LifecycleError,
    ReplayTuple,
    episode_rngs,
    feature_dim,
    rollout,
    trajectory_rows,
)

from conftest import make_scaled_config


class UniformPolicy:
    def action_distributions(self, view):
        return np.full((view.n_components, N_ACTIONS), 1.0 / N_ACTIONS)


class TrivialPolicy:
    def action_distributions(self, view):
        dists = np.zeros((view.n_components, N_ACTIONS))
        dists[:, 0] = 1.0
        return dists


class TestActionCatalog:
    def test_replace_inspect_not_representable(self):
        assert (MaintenanceAction.REPLACE, True) not in ACTION_SET
        assert len(ACTION_SET) == 5

    def test_bad_codes_rejected(self):
        with pytest.raises(ValueError):
            JointAction(np.array([0, 5]))
        with pytest.raises(ValueError):
            JointAction(np.array([-1]))


class TestReset:
    def test_default_reset_is_intact_certainty(self, default_config):
        env = Env(default_config)
        view = env.reset(seed=0)
        assert np.array_equal(view.beliefs.probs[:, INTACT], np.ones(10))
        assert np.array_equal(env.hidden_states(), np.zeros(10, dtype=int))
        assert np.array_equal(view.beliefs.taus, np.ones(10, dtype=int))
        assert view.beliefs.time == 0
        assert view.beliefs.budget_remaining == 1.0

    def test_same_seed_same_hidden_trajectories(self, scaled_config):
        actions = JointAction.trivial(4)
        runs = []
        for _ in range(2):
            env = Env(scaled_config)
            env.reset(seed=123)
            states = [env.hidden_states()]
            while not env.done:
                env.step(actions)
                states.append(env.hidden_states())
            runs.append(np.stack(states))
        assert np.array_equal(runs[0], runs[1])

    def test_nondegenerate_initial_belief_sampling(self):
        b0 = np.array([0.55, 0.2, 0.15, 0.07, 0.03])
        config = make_scaled_config(n_components=2, horizon=3, initial_belief=b0)
        env = Env(config)
        n = 100_000
        counts = np.zeros(5)
        rng = np.random.default_rng(42)
        for _ in range(n):
            env.reset(rng=rng)
            counts[env.hidden_states()[0]] += 1
        freq = counts / n
        sigma = np.sqrt(b0 * (1 - b0) / n)
        assert np.all(np.abs(freq - b0) <= 3 * sigma + 1e-12)


class TestStep:
    def test_trivial_step_costs(self, default_config):
        env = Env(default_config)
        env.reset(seed=1)
        result = env.step(JointAction.trivial(10))
        assert result.costs.maintenance == 0.0
        assert result.costs.inspection == 0.0
        assert result.costs.shutdown == 0.0
        assert result.costs.damage > 0.0  # nonzero failure risk from intact

    def test_replace_all_gives_intact_beliefs(self, default_config):
        env = Env(default_config)
        env.reset(seed=2)
        for _ in range(5):
            env.step(JointAction.trivial(10))
        result = env.step(JointAction(np.full(10, 4)))
        assert np.array_equal(result.view.beliefs.probs[:, INTACT], np.ones(10))
        assert np.array_equal(env.hidden_states(), np.zeros(10, dtype=int))
        assert np.array_equal(result.view.beliefs.taus, np.ones(10, dtype=int))
        assert np.array_equal(result.view.ages, np.zeros(10, dtype=int))

    def test_tau_advances_and_saturates(self, scaled_config):
        env = Env(scaled_config)
        env.reset(seed=3)
        env.step(JointAction.trivial(4))
        assert np.array_equal(env.view().beliefs.taus, np.full(4, 2))
        # partial repair does not reset the rate index
        env.step(JointAction(np.full(4, 2)))
        assert np.array_equal(env.view().beliefs.taus, np.full(4, 3))

    def test_step_past_horizon_raises(self, tiny_config):
        env = Env(tiny_config)
        env.reset(seed=4)
        for _ in range(tiny_config.horizon):
            env.step(JointAction.trivial(2))
        with pytest.raises(LifecycleError):
            env.step(JointAction.trivial(2))

    def test_costs_match_composite_step_cost(self, default_config):
        # Dual route: the vectorized in-env computation against the plain
        # composition in the costs module.
        env = Env(default_config)
        view = env.reset(seed=5)
        rng = np.random.default_rng(6)
        for _ in range(20):
            codes = rng.integers(0, N_ACTIONS, size=10)
            action = JointAction(codes)
            expected, _, _ = step_cost(
                view.beliefs.probs,
                action.maintenance(),
                action.inspections(),
                default_config.models,
                default_config.topology,
                default_config.losses,
                view.beliefs.taus,
            )
            result = env.step(action)
            got = result.costs
            assert got.maintenance == pytest.approx(expected.maintenance, abs=1e-12)
            assert got.inspection == pytest.approx(expected.inspection, abs=1e-12)
            assert got.shutdown == pytest.approx(expected.shutdown, abs=1e-12)
            assert got.damage == pytest.approx(expected.damage, abs=1e-12)
            view = result.view

    def test_terminal_flag_on_last_step(self, tiny_config):
        env = Env(tiny_config)
        env.reset(seed=7)
        flags = []
        while not env.done:
            flags.append(env.step(JointAction.trivial(2)).replay.terminal)
        assert flags == [False] * (tiny_config.horizon - 1) + [True]

    def test_feature_vector_layout(self, scaled_config):
        env = Env(scaled_config)
        view = env.reset(seed=8)
        feats = view.features()
        assert feats.shape == (feature_dim(4),)
        assert np.array_equal(feats[:20], view.beliefs.probs.ravel())
        assert np.allclose(feats[20:24], view.beliefs.taus / 50)
        assert feats[24] == 0.0  # t/T
        assert feats[25] == 1.0  # remaining budget fraction


class TestBudgetGating:
    def test_gated_step_records_zero_action_costs(self):
        config = make_scaled_config(budget=BudgetSpec(cap=0.001, cycle_length=5))
        env = Env(config)
        env.reset(seed=9)
        result = env.step(JointAction(np.full(4, 4)))  # replace all: way over cap
        assert result.info["gated"]
        assert result.costs.maintenance == 0.0
        assert result.costs.inspection == 0.0
        assert np.array_equal(result.info["effective_codes"], np.zeros(4, dtype=int))
        # dynamics followed the trivial action: no replacement happened
        assert not np.array_equal(result.view.beliefs.probs[:, INTACT], np.ones(4))

    def test_cycle_expenditure_never_exceeds_cap(self):
        spec = BudgetSpec(cap=0.15, cycle_length=5)
        config = make_scaled_config(budget=spec)
        rng = np.random.default_rng(10)
        for ep in range(40):
            env = Env(config)
            env.reset(seed=1000 + ep)
            while not env.done:
                codes = rng.integers(0, N_ACTIONS, size=4)
                result = env.step(JointAction(codes))
                assert result.info["budget_spent"] <= spec.cap  # exact comparison

    def test_infinite_cap_reproduces_unconstrained_dynamics(self):
        base = make_scaled_config()
        capped = make_scaled_config(
            budget=BudgetSpec(cap=float("inf"), cycle_length=5)
        )
        ledger_a, traj_a = rollout(UniformPolicy(), base, seed=11, record_trajectory=True)
        ledger_b, traj_b = rollout(UniformPolicy(), capped, seed=11, record_trajectory=True)
        assert ledger_a.components() == ledger_b.components()
        for a, b in zip(traj_a, traj_b):
            assert np.array_equal(a["actions"], b["actions"])
            assert np.array_equal(a["hidden_after"], b["hidden_after"])
            assert np.array_equal(a["observations"], b["observations"])


class TestRollout:
    def test_zero_losses_trivial_policy_costs_nothing(self):
        config = make_scaled_config(discount=1.0)
        config.losses = LossTable(np.zeros(4), np.zeros(4))
        ledger, _ = rollout(TrivialPolicy(), config, seed=12)
        assert ledger.total == 0.0

    def test_deterministic_policy_bit_identical_ledgers(self, scaled_config):
        a, _ = rollout(TrivialPolicy(), scaled_config, seed=13)
        b, _ = rollout(TrivialPolicy(), scaled_config, seed=13)
        assert a.components() == b.components()
        assert a.steps == b.steps

    def test_stochastic_policy_reproducible(self, scaled_config):
        a, traj_a = rollout(UniformPolicy(), scaled_config, seed=14, record_trajectory=True)
        b, traj_b = rollout(UniformPolicy(), scaled_config, seed=14, record_trajectory=True)
        assert a.components() == b.components()
        for s, t in zip(traj_a, traj_b):
            assert np.array_equal(s["actions"], t["actions"])

    def test_trajectory_rows_shape(self, scaled_config):
        _, traj = rollout(UniformPolicy(), scaled_config, seed=15, record_trajectory=True)
        rows = trajectory_rows(traj)
        assert len(rows) == scaled_config.horizon * 4
        assert {"t", "component", "action", "belief_0", "cost_risk"} <= set(rows[0])


class TestReplayTuple:
    def test_round_trip_is_lossless(self, scaled_config):
        env = Env(scaled_config)
        env.reset(seed=16)
        result = env.step(JointAction(np.array([1, 0, 2, 4])))
        item = result.replay
        item.mu = np.array([0.25, 0.5, 0.125, 0.125])
        back = ReplayTuple.from_json(item.to_json())
        assert np.array_equal(back.features, item.features)
        assert np.array_equal(back.next_features, item.next_features)
        assert np.array_equal(back.actions, item.actions)
        assert np.array_equal(back.mu, item.mu)
        assert back.cost == item.cost
        assert np.array_equal(back.g_soft, item.g_soft)
        assert back.terminal == item.terminal


class TestBeliefTruthConsistency:
    def test_hidden_state_frequency_matches_belief(self):
        # Identical action/observation histories must see hidden-state
        # frequencies converging to the filtered belief.
        config = make_scaled_config(n_components=2, horizon=3, types=("III", "III"))
        plan = [
            np.array([1, 1]),  # inspect both
            np.array([1, 1]),
            np.array([0, 0]),
        ]
        n_rollouts = 8000
        bins = {}
        for k in range(n_rollouts):
            env_rng, _ = episode_rngs(900, k)
            env = Env(config)
            env.reset(rng=env_rng)
            history = []
            for codes in plan:
                result = env.step(JointAction(codes))
                history.append(tuple(result.info["observations"]))
            key = tuple(history)
            final_belief = result.view.beliefs.probs.copy()
            entry = bins.setdefault(
                key, {"belief": final_belief, "counts": np.zeros((2, 5)), "n": 0}
            )
            assert np.allclose(entry["belief"], final_belief, atol=1e-12)
            entry["counts"][np.arange(2), env.hidden_states()] += 1
            entry["n"] += 1
        checked = 0
        for entry in bins.values():
            if entry["n"] < 400:
                continue
            checked += 1
            freq = entry["counts"] / entry["n"]
            p = entry["belief"]
            sigma = np.sqrt(p * (1 - p) / entry["n"])
            assert np.all(np.abs(freq - p) <= 3 * sigma + 1e-9)
        assert checked >= 1
