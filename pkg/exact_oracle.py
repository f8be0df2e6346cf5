#!/usr/bin/env python3
"""
Exact finite-horizon dynamic-programming oracle for small discretized instances.

Positions live on the integer grid 0..L, speeds come from a finite set and
the adversary placement is fixed. Step costs and successors do not depend on
the time index, so transitions are enumerated once (compressed per state) and
each backward-induction stage is a vectorized gather plus a segmented max.
"""

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from common_utils import CACHE_DIR, ORACLE_MAX_TRANSITIONS, ORACLE_MAX_VALUE_ENTRIES, format_duration
from route_env import HybridAction, TeamState, is_done, potential, step
from scenario_config import resolve_scenario
from trajectory_log import record_step

CACHE_FORMAT_VERSION = 1
MAX_ROUTE_LENGTH = 80
MAX_ROBOTS = 3
MAX_ADVERSARIES = 3
MAX_SPEEDS = 4
TIE_TOLERANCE = 1e-9


class OracleBudgetError(RuntimeError):
    """Raised before allocation when an instance is too large to enumerate."""


@dataclass(frozen=True)
class DiscreteInstance:
    cfg: object
    speeds: tuple
    adversary_positions: tuple
    horizon: int

    @property
    def route_length(self):
        return int(self.cfg.route_length)

    @property
    def guard_targets(self):
        m = self.cfg.n_adversaries
        return tuple(range(1, m + 1)) if m else (0,)

    @property
    def robot_options(self):
        """Per-robot (speed, guard) pairs in lexicographic order."""
        return tuple(itertools.product(self.speeds, self.guard_targets))

    @property
    def n_states(self):
        return (self.route_length + 1) ** self.cfg.n_robots


def make_instance(cfg, speeds=None, adversary_positions=None, horizon=None):
    if not float(cfg.route_length).is_integer():
        raise ValueError(f"Oracle needs an integer route length, got {cfg.route_length}")
    if cfg.route_length > MAX_ROUTE_LENGTH:
        raise ValueError(f"Oracle route length is limited to {MAX_ROUTE_LENGTH}, got {cfg.route_length}")
    if cfg.n_robots > MAX_ROBOTS:
        raise ValueError(f"Oracle handles at most {MAX_ROBOTS} robots, got {cfg.n_robots}")
    if cfg.n_adversaries > MAX_ADVERSARIES:
        raise ValueError(f"Oracle handles at most {MAX_ADVERSARIES} adversaries, got {cfg.n_adversaries}")

    if speeds is None:
        speeds = tuple(float(v) for v in range(int(math.floor(cfg.v_max)) + 1))
    speeds = tuple(sorted({float(v) for v in speeds}))
    if not speeds or len(speeds) > MAX_SPEEDS:
        raise ValueError(f"Oracle speed set must hold 1..{MAX_SPEEDS} values, got {speeds}")
    for v in speeds:
        if v < 0 or v > cfg.v_max:
            raise ValueError(f"Oracle speed {v} outside [0, {cfg.v_max}]")
        if not float(v * cfg.dt).is_integer():
            raise ValueError(f"Speed {v} with dt {cfg.dt} leaves the integer grid")

    if adversary_positions is None:
        adversary_positions = tuple(adv.position for adv in cfg.adversaries)
    adversary_positions = tuple(float(z) for z in adversary_positions)
    if len(adversary_positions) != cfg.n_adversaries:
        raise ValueError(
            f"Expected {cfg.n_adversaries} adversary positions, got {len(adversary_positions)}"
        )
    for j, z in enumerate(adversary_positions, start=1):
        if not z.is_integer():
            raise ValueError(f"Adversary {j}: position {z} is not on the integer grid")

    horizon = cfg.horizon if horizon is None else int(horizon)
    if horizon < 1:
        raise ValueError(f"Oracle horizon must be at least 1, got {horizon}")
    return DiscreteInstance(replace(cfg, horizon=horizon), speeds, adversary_positions, horizon)


def _joint_options(positions, n_options, route_length, prune):
    """
    Joint option indices for a state. Arrived robots get one representative
    option; with pruning, robots sharing a position take non-decreasing options.
    """
    per_robot = [range(n_options) if s < route_length else (0,) for s in positions]
    n = len(positions)
    ties = [
        (a, b)
        for a in range(n)
        for b in range(a + 1, n)
        if positions[a] == positions[b] and positions[a] < route_length
    ]
    for combo in itertools.product(*per_robot):
        if prune and any(combo[a] > combo[b] for a, b in ties):
            continue
        yield combo


def _action_for(instance, combo):
    options = instance.robot_options
    return HybridAction(
        speeds=tuple(options[k][0] for k in combo),
        guards=tuple(options[k][1] for k in combo),
    )


def _state_index(positions, base):
    index = 0
    for s in positions:
        index = index * base + int(s)
    return index


def _tail_values(instance, shaped):
    """Value after the episode ends: zero for raw costs, -potential when shaped."""
    if not shaped:
        return np.zeros(instance.n_states)
    base = instance.route_length + 1
    cfg = instance.cfg
    tail = np.empty(instance.n_states)
    for index, positions in enumerate(itertools.product(range(base), repeat=cfg.n_robots)):
        state = TeamState(tuple(float(s) for s in positions), instance.adversary_positions, 0)
        tail[index] = -potential(state, cfg)
    return tail


def check_budget(instance):
    n_options = len(instance.robot_options)
    transitions_bound = instance.n_states * n_options ** instance.cfg.n_robots
    value_entries = instance.n_states * (instance.horizon + 1)
    if transitions_bound > ORACLE_MAX_TRANSITIONS:
        raise OracleBudgetError(
            f"Oracle instance needs up to {transitions_bound:,} transitions "
            f"({instance.n_states:,} states x {n_options}^{instance.cfg.n_robots} joint options), "
            f"budget is {ORACLE_MAX_TRANSITIONS:,} (ORACLE_MAX_TRANSITIONS)"
        )
    if value_entries > ORACLE_MAX_VALUE_ENTRIES:
        raise OracleBudgetError(
            f"Oracle value table needs {value_entries:,} entries "
            f"({instance.n_states:,} states x {instance.horizon + 1} stages), "
            f"budget is {ORACLE_MAX_VALUE_ENTRIES:,} (ORACLE_MAX_VALUE_ENTRIES)"
        )
    return transitions_bound, value_entries


def build_transitions(instance, shaped=False):
    """
    Enumerates (reward, successor) for every non-terminal state.

    Returns (active_states, segment_starts, rewards, successors): the options
    of active_states[k] occupy rewards[segment_starts[k]:segment_starts[k+1]].
    """
    cfg = instance.cfg
    L = instance.route_length
    base = L + 1
    n_options = len(instance.robot_options)
    active, starts, rewards, successors = [], [], [], []
    for index, positions in enumerate(itertools.product(range(base), repeat=cfg.n_robots)):
        if all(s == L for s in positions):
            continue
        state = TeamState(tuple(float(s) for s in positions), instance.adversary_positions, 0)
        active.append(index)
        starts.append(len(rewards))
        for combo in _joint_options(positions, n_options, L, prune=True):
            outcome = step(state, _action_for(instance, combo), cfg)
            rewards.append(outcome.shaped_reward if shaped else outcome.raw_reward)
            successors.append(_state_index(outcome.next_state.positions, base))
    return (
        np.array(active, dtype=np.int64),
        np.array(starts, dtype=np.int64),
        np.array(rewards, dtype=float),
        np.array(successors, dtype=np.int64),
    )


@dataclass
class OracleSolution:
    instance: DiscreteInstance
    discount: float
    shaped: bool
    values: np.ndarray  # (horizon + 1, n_states)

    @property
    def cfg(self):
        return self.instance.cfg

    def state_index(self, positions):
        L = self.instance.route_length
        for s in positions:
            if not float(s).is_integer() or not 0 <= s <= L:
                raise ValueError(f"Position {s} is not on the grid 0..{L}")
        return _state_index(positions, L + 1)

    def value(self, positions, t=0):
        if not 0 <= t <= self.instance.horizon:
            raise ValueError(f"Time {t} outside 0..{self.instance.horizon}")
        return float(self.values[t, self.state_index(positions)])

    @property
    def optimal_return(self):
        return self.value(tuple(0 for _ in range(self.cfg.n_robots)), 0)

    def action_values(self, positions, t):
        """(HybridAction, Q) for every joint option at a live state, unpruned."""
        state = TeamState(tuple(float(s) for s in positions), self.instance.adversary_positions, t)
        if is_done(state, self.cfg):
            return []
        L = self.instance.route_length
        base = L + 1
        n_options = len(self.instance.robot_options)
        scored = []
        for combo in _joint_options(positions, n_options, L, prune=False):
            action = _action_for(self.instance, combo)
            outcome = step(state, action, self.cfg)
            reward = outcome.shaped_reward if self.shaped else outcome.raw_reward
            successor = _state_index(outcome.next_state.positions, base)
            scored.append((action, reward + self.discount * self.values[t + 1, successor]))
        return scored

    def optimal_actions(self, positions, t=0, tolerance=TIE_TOLERANCE):
        """All joint actions within `tolerance` of the optimum, lexicographic order."""
        best = self.value(positions, t)
        threshold = best - tolerance * max(1.0, abs(best))
        return [action for action, q in self.action_values(positions, t) if q >= threshold]

    policy = optimal_actions


def cache_key(instance, discount, shaped):
    payload = {
        "format": CACHE_FORMAT_VERSION,
        "scenario": asdict(instance.cfg),
        "speeds": instance.speeds,
        "adversary_positions": instance.adversary_positions,
        "horizon": instance.horizon,
        "discount": discount,
        "shaped": shaped,
    }
    text = json.dumps(payload, sort_keys=True, default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _load_cached(path, key, expected_shape):
    try:
        with np.load(path) as data:
            if int(data["format"]) != CACHE_FORMAT_VERSION or str(data["key"]) != key:
                return None
            values = np.array(data["values"])
    except (OSError, KeyError, ValueError) as e:
        print(f"Warning: Ignoring unreadable oracle cache {path}: {e}")
        return None
    if values.shape != expected_shape:
        return None
    return values


def solve_exact(instance, discount=1.0, shaped=False, cache_dir=None, use_cache=True):
    """
    Backward induction over all grid states and stages.

    discount=1.0 gives the undiscounted team cost; with shaped=True the
    rewards include shaping and the tail value is the negated potential.
    """
    if not 0 < discount <= 1:
        raise ValueError(f"Discount must be in (0, 1], got {discount}")
    cache_dir = CACHE_DIR if cache_dir is None else cache_dir
    key = cache_key(instance, discount, shaped)
    cache_path = os.path.join(cache_dir, f"oracle_{key[:16]}.npz")
    expected_shape = (instance.horizon + 1, instance.n_states)

    if use_cache and os.path.exists(cache_path):
        values = _load_cached(cache_path, key, expected_shape)
        if values is not None:
            print(f"✓ Oracle solution already exists: {cache_path} (Skipping step)")
            return OracleSolution(instance, discount, shaped, values)

    transitions_bound, value_entries = check_budget(instance)
    print(
        f"Solving oracle: {instance.n_states:,} states, up to {transitions_bound:,} transitions, "
        f"{value_entries:,} value entries"
    )
    start = time.time()
    active, starts, rewards, successors = build_transitions(instance, shaped)
    tail = _tail_values(instance, shaped)

    values = np.empty(expected_shape)
    values[instance.horizon] = tail
    for t in range(instance.horizon - 1, -1, -1):
        q = rewards + discount * values[t + 1][successors]
        values[t] = tail
        if len(active):
            values[t][active] = np.maximum.reduceat(q, starts)
    print(f"✓ Oracle solved ({len(rewards):,} transitions) in {format_duration(time.time() - start)}")

    if use_cache:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez(cache_path, values=values, format=CACHE_FORMAT_VERSION, key=key)
        print(f"✓ Oracle solution cached: {cache_path}")
    return OracleSolution(instance, discount, shaped, values)


def oracle_rollout(solution, state=None):
    """
    Follows the lexicographically smallest optimal action until the episode ends.
    Returns the list of StepRecords.
    """
    cfg = solution.cfg
    if state is None:
        state = TeamState(
            tuple(0.0 for _ in range(cfg.n_robots)), solution.instance.adversary_positions, 0
        )
    if tuple(state.adversary_positions) != solution.instance.adversary_positions:
        raise ValueError("Oracle rollout must keep the placement the oracle was solved for")
    records = []
    while not is_done(state, cfg):
        actions = solution.optimal_actions(state.positions, state.step)
        if not actions:
            raise RuntimeError(f"No optimal action found at {state.positions}, t={state.step}")
        outcome = step(state, actions[0], cfg)
        records.append(record_step(state, actions[0], outcome, cfg))
        state = outcome.next_state
    return records


def main():
    parser = argparse.ArgumentParser(description="Solve a scenario exactly on the integer grid")
    parser.add_argument("scenario", help="Preset name or scenario .cfg path")
    parser.add_argument("--discount", type=float, default=1.0)
    parser.add_argument("--shaped", action="store_true", help="Optimize the shaped reward")
    parser.add_argument("--no-cache", action="store_true", help="Recompute even if cached")
    args = parser.parse_args()

    try:
        instance = make_instance(resolve_scenario(args.scenario))
        solution = solve_exact(instance, args.discount, args.shaped, use_cache=not args.no_cache)
    except (OracleBudgetError, OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
    print(f"Optimal return from the start state: {solution.optimal_return:.6f}")
    records = oracle_rollout(solution)
    print(f"✓ Optimal rollout takes {len(records)} steps")


if __name__ == "__main__":
    main()
