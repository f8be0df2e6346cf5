#!/usr/bin/env python3
"""
Team route-traversal environment.

Robots move along a 1-D route [0, L]. Each step every robot picks a speed and
an adversary to guard. Risk, guard containment and the time penalty are all
evaluated at the positions the robots hold before moving. A robot that has
reached L is frozen: it no longer moves, takes no risk, pays no penalty and
its guard is inert.
"""

import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from scenario_config import resolve_scenario

# Tolerance used when validating speeds against [0, v_max].
SPEED_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TeamState:
    positions: tuple
    adversary_positions: tuple
    step: int = 0

    def arrived(self, route_length):
        return tuple(s >= route_length for s in self.positions)

    def all_arrived(self, route_length):
        return all(s >= route_length for s in self.positions)


@dataclass(frozen=True)
class HybridAction:
    """Per-robot speeds and 1-based guard targets (0 only when there are no adversaries)."""

    speeds: tuple
    guards: tuple


@dataclass(frozen=True)
class StepOutcome:
    next_state: TeamState
    raw_reward: float
    shaped_reward: float
    risk: tuple
    penalty: tuple
    discounts: tuple
    done: bool


def initial_state(cfg, adversary_positions=None):
    if adversary_positions is None:
        adversary_positions = tuple(float(adv.position) for adv in cfg.adversaries)
    adversary_positions = tuple(float(z) for z in adversary_positions)
    if len(adversary_positions) != cfg.n_adversaries:
        raise ValueError(
            f"Expected {cfg.n_adversaries} adversary positions, got {len(adversary_positions)}"
        )
    for j, (adv, z) in enumerate(zip(cfg.adversaries, adversary_positions), start=1):
        if z not in adv.support:
            raise ValueError(f"Adversary {j}: position {z} is outside its placement support")
    return TeamState(
        positions=tuple(0.0 for _ in range(cfg.n_robots)),
        adversary_positions=adversary_positions,
        step=0,
    )


def sample_adversary_positions(cfg, rng):
    return tuple(float(rng.choice(adv.support)) for adv in cfg.adversaries)


def reset(cfg, rng=None, placement=None):
    """Robots at 0; adversaries at `placement` or sampled from their supports."""
    if placement is None:
        if rng is None:
            placement = tuple(float(adv.position) for adv in cfg.adversaries)
        else:
            placement = sample_adversary_positions(cfg, rng)
    return initial_state(cfg, placement)


def speed_in_range(v, cfg):
    return math.isfinite(v) and -SPEED_TOLERANCE <= v <= cfg.v_max + SPEED_TOLERANCE


def advance_position(s, v, cfg):
    if not speed_in_range(v, cfg):
        raise ValueError(f"Speed {v} outside [0, {cfg.v_max}]")
    return min(s + max(v, 0.0) * cfg.dt, cfg.route_length)


def time_penalty(s, cfg):
    return cfg.time_penalty if s < cfg.route_length else 0.0


def risk_values(s, adv, z=None):
    """Vectorized unit risk of an adversary at z for positions s (scalar or array)."""
    z = adv.position if z is None else z
    s = np.asarray(s, dtype=float)
    profile = adv.profile
    if profile.kind == "triangular":
        return np.maximum(0.0, profile.peak - profile.slope * np.abs(s - z))
    offsets = np.array([p[0] for p in profile.breakpoints])
    values = np.array([p[1] for p in profile.breakpoints])
    return np.interp(s - z, offsets, values, left=0.0, right=0.0)


def unit_risk(s, adv, z=None):
    return float(risk_values(s, adv, z))


def in_zone(s, adv, cfg, z=None):
    lo, hi = adv.zone(cfg.route_length, z)
    return lo <= s <= hi


def guard_discount(v_k, g_k, j, s_k, adv_j, cfg, z=None):
    """Containment factor robot k applies to adversary j (1 means no containment)."""
    if g_k != j or s_k >= cfg.route_length or not in_zone(s_k, adv_j, cfg, z):
        return 1.0
    return 1.0 - adv_j.beta * abs(cfg.v_max - v_k) / cfg.v_max


def validate_action(state, action, cfg):
    n, m = cfg.n_robots, cfg.n_adversaries
    if len(action.speeds) != n or len(action.guards) != n:
        raise ValueError(
            f"Action must carry {n} speeds and {n} guard targets, "
            f"got {len(action.speeds)} and {len(action.guards)}"
        )
    for i, (v, g) in enumerate(zip(action.speeds, action.guards), start=1):
        if not speed_in_range(v, cfg):
            raise ValueError(f"Robot {i}: speed {v} outside [0, {cfg.v_max}]")
        if m == 0:
            if g != 0:
                raise ValueError(f"Robot {i}: guard target {g} given but there are no adversaries")
        elif not (isinstance(g, (int, np.integer)) and 1 <= g <= m):
            raise ValueError(f"Robot {i}: guard target {g} outside 1..{m}")


def effective_speeds(state, action, cfg):
    """Arrived robots are frozen at speed 0; tiny tolerance overshoots are clipped."""
    return tuple(
        0.0 if s >= cfg.route_length else min(max(float(v), 0.0), cfg.v_max)
        for s, v in zip(state.positions, action.speeds)
    )


def team_step_cost(state, action, cfg):
    """
    Per-robot accrued risk and penalty for one step.

    Returns (risk, penalty, discounts) where discounts[k][j] is the containment
    factor robot k applies to adversary j+1.
    """
    validate_action(state, action, cfg)
    speeds = effective_speeds(state, action, cfg)
    n, m = cfg.n_robots, cfg.n_adversaries

    discounts = tuple(
        tuple(
            guard_discount(
                speeds[k], action.guards[k], j + 1, state.positions[k],
                cfg.adversaries[j], cfg, state.adversary_positions[j],
            )
            for j in range(m)
        )
        for k in range(n)
    )
    # Sorted products keep costs identical under any relabelling of the robots.
    containment = [math.prod(sorted(discounts[k][j] for k in range(n))) for j in range(m)]

    risk = []
    penalty = []
    for i, s in enumerate(state.positions):
        if s >= cfg.route_length:
            risk.append(0.0)
            penalty.append(0.0)
            continue
        exposures = [
            containment[j] * unit_risk(s, cfg.adversaries[j], state.adversary_positions[j])
            for j in range(m)
        ]
        risk.append(math.fsum(exposures) * cfg.dt)
        penalty.append(time_penalty(s, cfg) * cfg.dt)
    return tuple(risk), tuple(penalty), discounts


def shaping_terms(prev, nxt, cfg):
    """(terminal bonus Q, progress shaping F) in raw cost units."""
    L = cfg.route_length
    bonus = cfg.terminal_q if nxt.all_arrived(L) and not prev.all_arrived(L) else 0.0
    progress = cfg.shaping_c * math.fsum(
        cfg.gamma * s_next - s for s, s_next in zip(prev.positions, nxt.positions)
    )
    return bonus, progress


def reshape_reward(prev, nxt, raw_reward, cfg):
    bonus, progress = shaping_terms(prev, nxt, cfg)
    return raw_reward + (bonus + progress) / cfg.reward_scale


def potential(state, cfg):
    """Shaping potential in reward units; the shaped reward adds gamma*phi(next) - phi(prev)."""
    arrived_bonus = cfg.terminal_q / cfg.gamma if state.all_arrived(cfg.route_length) else 0.0
    return (cfg.shaping_c * math.fsum(state.positions) + arrived_bonus) / cfg.reward_scale


def is_done(state, cfg):
    return state.all_arrived(cfg.route_length) or state.step >= cfg.horizon


def step(state, action, cfg):
    if is_done(state, cfg):
        raise RuntimeError(
            f"step() called on a finished episode (step {state.step}, horizon {cfg.horizon})"
        )
    risk, penalty, discounts = team_step_cost(state, action, cfg)
    speeds = effective_speeds(state, action, cfg)
    next_state = TeamState(
        positions=tuple(advance_position(s, v, cfg) for s, v in zip(state.positions, speeds)),
        adversary_positions=state.adversary_positions,
        step=state.step + 1,
    )
    raw_reward = -math.fsum(risk + penalty) / cfg.reward_scale
    shaped_reward = reshape_reward(state, next_state, raw_reward, cfg)
    return StepOutcome(
        next_state=next_state,
        raw_reward=raw_reward,
        shaped_reward=shaped_reward,
        risk=risk,
        penalty=penalty,
        discounts=discounts,
        done=is_done(next_state, cfg),
    )


def relocate_adversary(state, j, new_z, cfg):
    """Moves adversary j (1-based) to new_z; its risk zone follows."""
    if not 1 <= j <= cfg.n_adversaries:
        raise ValueError(f"Adversary index {j} outside 1..{cfg.n_adversaries}")
    new_z = float(new_z)
    if new_z not in cfg.adversaries[j - 1].support:
        raise ValueError(f"Adversary {j}: position {new_z} is outside its placement support")
    positions = list(state.adversary_positions)
    positions[j - 1] = new_z
    return replace(state, adversary_positions=tuple(positions))


def validate_relocation(relocation, cfg):
    """Checks an (step, adversary, new_z) relocation against the episode and the supports."""
    if relocation is None:
        return None
    if len(relocation) != 3:
        raise ValueError(f"Relocation must be (step, adversary, new_z), got {relocation}")
    t, j, new_z = relocation
    if not 0 <= t < cfg.horizon:
        raise ValueError(f"Relocation step {t} outside 0..{cfg.horizon - 1}")
    if not 1 <= j <= cfg.n_adversaries:
        raise ValueError(f"Adversary index {j} outside 1..{cfg.n_adversaries}")
    if float(new_z) not in cfg.adversaries[j - 1].support:
        raise ValueError(f"Adversary {j}: position {new_z} is outside its placement support")
    return (int(t), int(j), float(new_z))


class RouteEnv:
    """Stateful wrapper with the reset/step loop used by rollouts."""

    def __init__(self, cfg, seed=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.state = None

    def reset(self, placement=None):
        self.state = reset(self.cfg, self.rng, placement)
        return self.state

    def step(self, action):
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        outcome = step(self.state, action, self.cfg)
        self.state = outcome.next_state
        return outcome

    def relocate(self, j, new_z):
        self.state = relocate_adversary(self.state, j, new_z, self.cfg)
        return self.state


if __name__ == "__main__":
    scenario = sys.argv[1] if len(sys.argv) > 1 else "m1"
    try:
        cfg = resolve_scenario(scenario)
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
    env = RouteEnv(cfg, seed=0)
    state = env.reset()
    full_speed = HybridAction(
        speeds=tuple(cfg.v_max for _ in range(cfg.n_robots)),
        guards=tuple(1 if cfg.n_adversaries else 0 for _ in range(cfg.n_robots)),
    )
    total = 0.0
    while not is_done(state, cfg):
        outcome = env.step(full_speed)
        total += outcome.raw_reward
        state = outcome.next_state
    print(f"✓ Full-speed run finished after {state.step} steps, raw return {total:.4f}")
