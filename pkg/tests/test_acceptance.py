import unittest
import sys
import os
from dataclasses import replace

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scenario_config import ScenarioConfig, resolve_scenario
from route_env import initial_state
from trajectory_log import episode_return, run_policy
from baseline_policies import greedy_baseline
from exact_oracle import OracleBudgetError, make_instance, solve_exact
from experiment_harness import detect_overwatch
from ppo_trainer import D_PPO, H_PPO, TrainConfig, evaluate_policy, train

RUN_ACCEPTANCE = os.getenv("ROUTE_GUARD_ACCEPTANCE") == "1"
TRAIN_STEPS = int(os.getenv("ROUTE_GUARD_ACCEPTANCE_STEPS", "200000"))
SEEDS = range(5)


def train_config(**overrides):
    return replace(TrainConfig(total_steps=TRAIN_STEPS), **overrides).validate()


def fixed_placement(cfg):
    return tuple(adv.position for adv in cfg.adversaries)


@unittest.skipUnless(RUN_ACCEPTANCE, "set ROUTE_GUARD_ACCEPTANCE=1 to run training acceptance checks")
class TestLearnedBehaviour(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.cfg = make_instance(resolve_scenario("m1")).cfg
        cls.optimum = solve_exact(make_instance(cls.cfg)).optimal_return
        cls.policies = {
            seed: train(cls.cfg, train_config(), D_PPO, seed, verbose=False)[0] for seed in SEEDS
        }

    def evaluate(self, params, relocation=None):
        return evaluate_policy(params, self.cfg, [fixed_placement(self.cfg)], relocation=relocation)[0]

    def test_discrete_policy_close_to_oracle(self):
        close = 0
        for params in self.policies.values():
            value = episode_return(self.evaluate(params))
            if abs(value - self.optimum) <= 0.05 * abs(self.optimum):
                close += 1
        self.assertGreaterEqual(close, 4)

    def test_two_robot_policy_uses_overwatch(self):
        detected = sum(
            detect_overwatch(self.evaluate(params), self.cfg).overwatch_detected
            for params in self.policies.values()
        )
        self.assertGreaterEqual(detected, 4)

    def test_relocated_adversary_still_finished(self):
        for params in self.policies.values():
            records = self.evaluate(params, relocation=(5, 1, 38.0))
            self.assertTrue(detect_overwatch(records, self.cfg).all_arrived)
            lo, hi = self.cfg.zones((38.0,))[0]
            restationed = any(
                v == 0.0 and g == 1 and min(abs(s - lo), abs(s - hi)) <= 0.5
                for r in records if r.t >= 5
                for s, v, g in zip(r.positions, r.speeds, r.guards)
            )
            self.assertTrue(restationed)

    def test_greedy_far_behind_oracle(self):
        records = run_policy(lambda s: greedy_baseline(s, self.cfg), self.cfg, initial_state(self.cfg))
        greedy_cost = -episode_return(records)
        self.assertGreaterEqual(greedy_cost, 1.4 * -self.optimum)


@unittest.skipUnless(RUN_ACCEPTANCE, "set ROUTE_GUARD_ACCEPTANCE=1 to run training acceptance checks")
class TestThreeRobotTeam(unittest.TestCase):

    def test_guards_leave_before_travellers_finish(self):
        cfg = replace(resolve_scenario("m1"), n_robots=3)
        departed = 0
        for seed in SEEDS:
            params, _ = train(cfg, train_config(), D_PPO, seed, verbose=False)
            records = evaluate_policy(params, cfg, [fixed_placement(cfg)])[0]
            if detect_overwatch(records, cfg).early_departure_steps > 0:
                departed += 1
        self.assertGreaterEqual(departed, 3)


@unittest.skipUnless(RUN_ACCEPTANCE, "set ROUTE_GUARD_ACCEPTANCE=1 to run training acceptance checks")
class TestShapingAblation(unittest.TestCase):

    def test_without_shaping_robots_stall(self):
        cfg = replace(resolve_scenario("m1"), shaping_c=0.0, terminal_q=0.0)
        stalled = 0
        for seed in SEEDS:
            params, _ = train(cfg, train_config(), H_PPO, seed, verbose=False)
            records = evaluate_policy(params, cfg, [fixed_placement(cfg)])[0]
            if not detect_overwatch(records, cfg).all_arrived:
                stalled += 1
        self.assertGreater(stalled, len(SEEDS) // 2)


@unittest.skipUnless(RUN_ACCEPTANCE, "set ROUTE_GUARD_ACCEPTANCE=1 to run training acceptance checks")
class TestOverlappingZonesRanking(unittest.TestCase):

    def test_methods_rank_on_m2(self):
        cfg = resolve_scenario("m2")
        placement = fixed_placement(cfg)
        means = {}
        for variant in (D_PPO, H_PPO):
            returns = []
            for seed in SEEDS:
                params, _ = train(cfg, train_config(), variant, seed, verbose=False)
                returns.append(episode_return(evaluate_policy(params, cfg, [placement])[0]))
            means[variant] = sum(returns) / len(returns)
        greedy = episode_return(run_policy(lambda s: greedy_baseline(s, cfg), cfg, initial_state(cfg)))
        try:
            optimum = solve_exact(make_instance(cfg)).optimal_return
        except OracleBudgetError:
            optimum = None

        self.assertGreater(means[D_PPO], greedy)
        self.assertGreater(means[H_PPO], greedy)
        self.assertLessEqual(abs(means[H_PPO] - means[D_PPO]), 0.1 * abs(greedy))
        if optimum is not None:
            # H-PPO plays continuous speeds, so it may edge past the integer-speed optimum.
            for variant, mean in means.items():
                self.assertGreaterEqual(optimum, mean - 0.02 * abs(optimum), variant)


@unittest.skipUnless(RUN_ACCEPTANCE, "set ROUTE_GUARD_ACCEPTANCE=1 to run training acceptance checks")
class TestEmptyCorridor(unittest.TestCase):

    def test_policy_learns_full_speed(self):
        cfg = ScenarioConfig(route_length=30.0, n_robots=2, v_max=3.0, horizon=40, name="corridor")
        optimum = solve_exact(make_instance(cfg), use_cache=False).optimal_return
        optimal = 0
        for seed in SEEDS:
            params, _ = train(cfg, train_config(total_steps=min(TRAIN_STEPS, 50000)), D_PPO, seed, verbose=False)
            records = evaluate_policy(params, cfg, [()])[0]
            full_speed = all(
                v == cfg.v_max for r in records for s, v in zip(r.positions, r.speeds) if s < cfg.route_length
            )
            if full_speed and abs(episode_return(records) - optimum) <= 1e-9:
                optimal += 1
        self.assertAlmostEqual(optimum, -2.0, places=12)
        self.assertGreaterEqual(optimal, 4)


if __name__ == '__main__':
    unittest.main()
