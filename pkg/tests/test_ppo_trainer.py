import unittest
import sys
import os
import copy
import math
import tempfile
from dataclasses import replace

import numpy as np

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from nn_core import GradientTape, forward, forward_on_tape, make_optimizer, net_variables
from scenario_config import ScenarioConfig, resolve_scenario
from route_env import initial_state
from weighted_hot import encode_state
from ppo_trainer import (
    D_PPO,
    H_PPO,
    CurvePoint,
    RolloutBatch,
    TrainConfig,
    collect_rollout,
    compute_advantages,
    episodes_to_converge,
    evaluate_policy,
    init_policy,
    load_policy,
    load_train_config,
    log_prob_and_entropy,
    ppo_loss,
    ppo_update,
    sample_action,
    save_policy,
    train,
    train_config_from_values,
)

TINY = TrainConfig(
    hidden_sizes=(8,),
    rollout_length=64,
    minibatch_size=32,
    epochs=2,
    total_steps=128,
    n_workers=1,
)


def single_robot_cfg():
    return replace(resolve_scenario("m1_small"), n_robots=1)


def manual_batch(rewards, values, terminals, truncations=None, bootstrap=None):
    size = len(rewards)
    return RolloutBatch(
        states=np.zeros((size, 1)),
        actions=np.zeros((size, 1, 2)),
        log_probs=np.zeros(size),
        rewards=np.array(rewards, dtype=float),
        values=np.array(values, dtype=float),
        terminals=np.array(terminals, dtype=bool),
        truncations=np.array(truncations if truncations is not None else [False] * size, dtype=bool),
        bootstrap_values=np.array(bootstrap if bootstrap is not None else [0.0] * size, dtype=float),
    )


def reference_advantages(batch, gamma, lam):
    """Sum of discounted TD errors up to the end of each episode segment."""
    size = len(batch)
    deltas = []
    for t in range(size):
        if batch.terminals[t]:
            next_value = 0.0
        elif batch.truncations[t]:
            next_value = batch.bootstrap_values[t]
        else:
            next_value = batch.values[t + 1]
        deltas.append(batch.rewards[t] + gamma * next_value - batch.values[t])
    advantages = []
    for t in range(size):
        total, k = 0.0, t
        while True:
            total += (gamma * lam) ** (k - t) * deltas[k]
            if batch.terminals[k] or batch.truncations[k]:
                break
            k += 1
        advantages.append(total)
    return np.array(advantages)


class TestActionSampling(unittest.TestCase):

    def setUp(self):
        self.cfg = single_robot_cfg()
        self.params = init_policy(self.cfg, TINY, D_PPO, np.random.default_rng(0))
        self.params.actor.weights[-1][:] = 0.0
        self.params.actor.biases[-1][:] = 0.0
        self.encoded = encode_state(initial_state(self.cfg), self.cfg)

    def test_uniform_logits_log_probability(self):
        action, log_prob, encoded_action = sample_action(self.params, self.encoded, np.random.default_rng(1))
        self.assertAlmostEqual(log_prob, -math.log(4.0), places=12)
        self.assertIn(action.speeds[0], (0.0, 1.0, 2.0, 3.0))
        self.assertEqual(action.guards, (1,))
        self.assertEqual(encoded_action.shape, (1, 2))

    def test_sampling_frequencies(self):
        rng = np.random.default_rng(2)
        counts = {v: 0 for v in self.params.speed_set}
        draws = 4000
        for _ in range(draws):
            action, _, _ = sample_action(self.params, self.encoded, rng)
            counts[action.speeds[0]] += 1
        for v, count in counts.items():
            self.assertLess(abs(count / draws - 0.25), 0.03, f"speed {v}")

    def test_hybrid_speed_with_tiny_spread(self):
        params = init_policy(self.cfg, TINY, H_PPO, np.random.default_rng(0))
        params.actor.weights[-1][:] = 0.0
        params.actor.biases[-1][:] = 0.0
        params.log_spread[:] = -20.0
        action, _, _ = sample_action(params, self.encoded, np.random.default_rng(3))
        self.assertAlmostEqual(action.speeds[0], 1.5, places=6)
        deterministic, _, encoded_action = sample_action(params, self.encoded, deterministic=True)
        self.assertEqual(deterministic.speeds, (1.5,))
        self.assertEqual(encoded_action[0, 0], 1.5)

    def test_hybrid_log_prob_integrates_to_one(self):
        cfg = ScenarioConfig(route_length=10.0, n_robots=1, v_max=3.0)
        params = init_policy(cfg, TINY, H_PPO, np.random.default_rng(0))
        rng = np.random.default_rng(6)
        for _ in range(5):
            raw = float(rng.uniform(-0.5, 0.5))
            log_spread = float(rng.uniform(-1.5, 0.5))
            mean = cfg.v_max * (0.5 + raw)
            spread = math.exp(log_spread)
            step = spread / 200.0
            grid = np.arange(mean - 12.0 * spread, mean + 12.0 * spread, step)
            actions = np.zeros((len(grid), 1, 2))
            actions[:, 0, 0] = grid
            tape = GradientTape()
            actor_out = tape.constant(np.full((len(grid), 1), raw))
            log_prob, entropy = log_prob_and_entropy(
                params, actor_out, tape.variable(np.array([log_spread])), actions
            )
            density = np.exp(log_prob.value)
            self.assertAlmostEqual(density.sum() * step, 1.0, places=6)
            self.assertAlmostEqual(-(density * log_prob.value).sum() * step, float(entropy.value), places=6)

    def test_hybrid_speed_clamped_to_range(self):
        params = init_policy(self.cfg, TINY, H_PPO, np.random.default_rng(0))
        params.log_spread[:] = 3.0
        rng = np.random.default_rng(4)
        for _ in range(200):
            action, log_prob, _ = sample_action(params, self.encoded, rng)
            self.assertTrue(0.0 <= action.speeds[0] <= self.cfg.v_max)
            self.assertTrue(math.isfinite(log_prob))


class TestAdvantages(unittest.TestCase):

    def test_one_step_advantages(self):
        batch = manual_batch([1.0, 2.0, 3.0], [0.5, 0.5, 0.5], [False, False, True])
        advantages, returns = compute_advantages(batch, gamma=0.9, lam=0.0, normalize=False)
        np.testing.assert_allclose(advantages, [0.95, 1.95, 2.5], atol=1e-12)
        np.testing.assert_allclose(returns, [1.45, 2.45, 3.0], atol=1e-12)

    def test_full_lambda_gives_discounted_returns(self):
        batch = manual_batch([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [False, False, True])
        advantages, _ = compute_advantages(batch, gamma=0.9, lam=1.0, normalize=False)
        np.testing.assert_allclose(advantages, [5.23, 4.7, 3.0], atol=1e-12)

    def test_truncation_bootstraps_from_critic(self):
        batch = manual_batch([3.0], [0.0], [False], truncations=[True], bootstrap=[10.0])
        advantages, _ = compute_advantages(batch, gamma=0.9, lam=0.95, normalize=False)
        self.assertAlmostEqual(advantages[0], 12.0)

    def test_matches_reference_on_three_episodes(self):
        rng = np.random.default_rng(5)
        size = 14
        terminals = [False] * size
        truncations = [False] * size
        terminals[3] = True
        truncations[8] = True
        terminals[13] = True
        batch = manual_batch(
            rng.normal(size=size), rng.normal(size=size), terminals, truncations,
            bootstrap=rng.normal(size=size),
        )
        advantages, _ = compute_advantages(batch, gamma=0.97, lam=0.9, normalize=False)
        np.testing.assert_allclose(advantages, reference_advantages(batch, 0.97, 0.9), atol=1e-12)

    def test_normalized_advantages(self):
        rng = np.random.default_rng(6)
        batch = manual_batch(rng.normal(size=20), rng.normal(size=20), [False] * 19 + [True])
        advantages, returns = compute_advantages(batch, gamma=0.99, lam=0.95)
        self.assertAlmostEqual(advantages.mean(), 0.0, places=10)
        self.assertAlmostEqual(advantages.std(), 1.0, places=10)
        raw, _ = compute_advantages(batch, gamma=0.99, lam=0.95, normalize=False)
        np.testing.assert_allclose(returns, raw + batch.values, atol=1e-12)

    def test_unmarked_end_rejected(self):
        with self.assertRaises(ValueError):
            compute_advantages(manual_batch([1.0, 1.0], [0.0, 0.0], [False, False]), 0.99, 0.95)
        with self.assertRaises(ValueError):
            compute_advantages(manual_batch([], [], []), 0.99, 0.95)


class TestPPOUpdate(unittest.TestCase):

    def setUp(self):
        self.cfg = single_robot_cfg()

    def rollout(self, variant, steps=64, seed=0):
        params = init_policy(self.cfg, TINY, variant, np.random.default_rng(seed))
        batch, _ = collect_rollout(params, self.cfg, TINY, steps, np.random.default_rng(seed + 1))
        compute_advantages(batch, self.cfg.gamma, TINY.gae_lambda)
        return params, batch

    def test_zero_advantages_leave_actor_unchanged(self):
        params, batch = self.rollout(D_PPO)
        batch.advantages = np.zeros(len(batch))
        tc = replace(TINY, entropy_coef=0.0)
        before = copy.deepcopy(params.actor)
        ppo_update(params, batch, tc, make_optimizer(params.parameters(), tc.learning_rate),
                   np.random.default_rng(0))
        for w_before, w_after in zip(before.parameters(), params.actor.parameters()):
            np.testing.assert_array_equal(w_before, w_after)

    def test_positive_advantage_raises_action_probability(self):
        params, batch = self.rollout(D_PPO, steps=8)
        sample = batch.subset(np.array([0]))
        sample.advantages = np.array([1.0])
        sample.returns = np.array([0.0])
        chosen = int(sample.actions[0, 0, 0])

        def speed_log_prob():
            logits = forward(params.actor, sample.states[0])[:params.speed_head]
            shifted = logits - logits.max()
            return (shifted - np.log(np.exp(shifted).sum()))[chosen]

        before = speed_log_prob()
        tc = replace(TINY, entropy_coef=0.0, epochs=1, minibatch_size=1)
        ppo_update(params, sample, tc, make_optimizer(params.parameters(), tc.learning_rate),
                   np.random.default_rng(0))
        self.assertGreater(speed_log_prob(), before)

    def test_huge_clip_range_is_plain_ratio_objective(self):
        params, batch = self.rollout(H_PPO, steps=16)
        batch.log_probs = batch.log_probs + np.random.default_rng(7).normal(scale=0.5, size=len(batch))
        diagnostics, _ = ppo_loss(params, batch, clip_ratio=1e9, value_coef=0.0, entropy_coef=0.0)
        self.assertEqual(diagnostics["clip_fraction"], 0.0)
        tape = GradientTape()
        actor_out = forward_on_tape(params.actor, net_variables(tape, params.actor, "actor"), batch.states)
        log_prob, _ = log_prob_and_entropy(params, actor_out, tape.variable(params.log_spread), batch.actions)
        expected = -np.mean(np.exp(log_prob.value - batch.log_probs) * batch.advantages)
        self.assertAlmostEqual(diagnostics["policy_loss"], expected, places=12)
        clipped, _ = ppo_loss(params, batch, clip_ratio=0.01, value_coef=0.0, entropy_coef=0.0)
        self.assertGreater(clipped["clip_fraction"], 0.0)

    def test_loss_gradient_matches_finite_differences(self):
        tc = replace(TINY, hidden_sizes=(3,))
        params = init_policy(self.cfg, tc, H_PPO, np.random.default_rng(11))
        batch, _ = collect_rollout(params, self.cfg, tc, 6, np.random.default_rng(12))
        compute_advantages(batch, self.cfg.gamma, tc.gae_lambda)
        batch.log_probs = batch.log_probs + np.random.default_rng(13).normal(scale=0.05, size=len(batch))

        def loss_value():
            return ppo_loss(params, batch, 0.2, 0.5, 0.01)[0]["loss"]

        _, analytic = ppo_loss(params, batch, 0.2, 0.5, 0.01)
        h = 1e-5
        for p, g in zip(params.parameters(), analytic):
            numeric = np.zeros_like(p)
            for index in np.ndindex(p.shape):
                original = p[index]
                p[index] = original + h
                plus = loss_value()
                p[index] = original - h
                minus = loss_value()
                p[index] = original
                numeric[index] = (plus - minus) / (2 * h)
            np.testing.assert_allclose(g, numeric, rtol=1e-5, atol=1e-6)


class TestTraining(unittest.TestCase):

    def test_same_seed_same_run(self):
        cfg = resolve_scenario("m1_small")
        first, curves_a = train(cfg, TINY, D_PPO, seed=3, verbose=False)
        second, curves_b = train(cfg, TINY, D_PPO, seed=3, verbose=False)
        self.assertEqual(len(curves_a), 2)
        for a, b in zip(curves_a, curves_b):
            self.assertEqual(replace(a, wall_seconds=0.0), replace(b, wall_seconds=0.0))
        for p, q in zip(first.parameters(), second.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_hybrid_training_runs(self):
        cfg = resolve_scenario("m1_small")
        params, curves = train(cfg, TINY, H_PPO, seed=1, verbose=False)
        self.assertTrue(all(math.isfinite(p.policy_loss) for p in curves))
        records = evaluate_policy(params, cfg, [(5.0,), (7.0,)])
        self.assertEqual(len(records), 2)
        self.assertEqual(records[1][0].adversary_positions, (7.0,))

    def test_checkpoint_round_trip(self):
        cfg = resolve_scenario("m1_small")
        params = init_policy(cfg, TINY, H_PPO, np.random.default_rng(0))
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "policy.ckpt")
            save_policy(path, params, cfg)
            loaded = load_policy(path, cfg)
            with self.assertRaises(ValueError):
                load_policy(path, replace(cfg, n_robots=3))
            with self.assertRaises(ValueError):
                load_policy(path, replace(cfg, route_length=12.0))
        self.assertEqual(loaded.variant, H_PPO)
        for p, q in zip(params.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(p, q)


class TestTrainConfig(unittest.TestCase):

    def test_default_file(self):
        path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "train_default.cfg")
        tc = load_train_config(path)
        self.assertEqual(tc.clip_ratio, 0.2)
        self.assertEqual(tc.hidden_sizes, (128, 128))
        self.assertEqual(tc.speed_levels, 4)

    def test_unknown_key_rejected(self):
        with self.assertRaises(ValueError):
            train_config_from_values({"learning_rat": "0.001"})

    def test_invalid_values_rejected(self):
        with self.assertRaises(ValueError):
            train_config_from_values({"clip_ratio": "1.5"})
        with self.assertRaises(ValueError):
            train_config_from_values({"epochs": "many"})


class TestConvergence(unittest.TestCase):

    def point(self, iteration, episodes, mean_return):
        return CurvePoint(iteration, 0, episodes, mean_return, mean_return, 0.0, 0.0, 0.0, 0.0, 0.0)

    def test_episodes_until_within_tolerance(self):
        curves = [self.point(0, 10, -5.0), self.point(1, 12, -2.02), self.point(2, 15, -2.0)]
        self.assertEqual(episodes_to_converge(curves), 22)

    def test_no_finished_episodes(self):
        self.assertIsNone(episodes_to_converge([self.point(0, 0, float("nan"))]))


if __name__ == '__main__':
    unittest.main()
