#!/usr/bin/env python3
"""
Reference policies that need no training: a decoupled greedy baseline, the
bounding-overwatch heuristic, and the constant-speed sweep for one robot
facing one adversary.
"""

import argparse
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from route_env import (
    HybridAction,
    advance_position,
    guard_discount,
    initial_state,
    risk_values,
    time_penalty,
    unit_risk,
)
from scenario_config import resolve_scenario
from trajectory_log import episode_return, run_policy

# Robots closer than this to a zone boundary count as holding at it.
BOUNDARY_TOLERANCE = 1e-9


def default_speed_set(cfg):
    return tuple(float(v) for v in range(int(math.floor(cfg.v_max)) + 1))


def _robot_step_cost(s, v, g, state, cfg):
    """Own accrued cost of one step when no teammate is guarding."""
    if s >= cfg.route_length:
        return 0.0
    exposures = []
    for j, adv in enumerate(cfg.adversaries, start=1):
        z = state.adversary_positions[j - 1]
        alpha = guard_discount(v, g, j, s, adv, cfg, z)
        exposures.append(alpha * unit_risk(s, adv, z))
    return (math.fsum(exposures) + time_penalty(s, cfg)) * cfg.dt


def _solo_cost_to_go(s, state, cfg):
    """Own cost to finish from s at full speed with no guarding."""
    total = []
    while s < cfg.route_length:
        exposures = [
            unit_risk(s, adv, state.adversary_positions[j])
            for j, adv in enumerate(cfg.adversaries)
        ]
        total.append((math.fsum(exposures) + time_penalty(s, cfg)) * cfg.dt)
        s = advance_position(s, cfg.v_max, cfg)
    return math.fsum(total)


def greedy_choice(s, state, cfg, speeds=None, lookahead=True):
    """
    Best (speed, guard) for a robot at s looking only at itself.

    With lookahead (the default) the score is the cost of this step plus the
    cost of finishing alone at full speed from where it lands. This departs
    from a purely one-step rule: scored on this step alone, waiting at v=0
    inside a zone is always cheapest because the robot discounts its own risk,
    so the one-step robot stalls there until the horizon. lookahead=False
    gives that one-step rule. Ties go to the higher speed, then the lower
    guard index.
    """
    speeds = default_speed_set(cfg) if speeds is None else speeds
    guards = tuple(range(1, cfg.n_adversaries + 1)) or (0,)
    best = None
    for v in sorted(speeds, reverse=True):
        landing = advance_position(s, v, cfg)
        for g in guards:
            cost = _robot_step_cost(s, v, g, state, cfg)
            if lookahead:
                cost += _solo_cost_to_go(landing, state, cfg)
            if best is None or cost < best[0]:
                best = (cost, v, g)
    return best[1], best[2]


def greedy_baseline(state, cfg, speeds=None, lookahead=True):
    choices = [
        greedy_choice(s, state, cfg, speeds, lookahead) if s < cfg.route_length else (0.0, 1 if cfg.n_adversaries else 0)
        for s in state.positions
    ]
    return HybridAction(
        speeds=tuple(float(v) for v, _ in choices),
        guards=tuple(g for _, g in choices),
    )


def _ordered_zones(state, cfg):
    zones = sorted(
        (lo, hi, j)
        for j, (lo, hi) in enumerate(cfg.zones(state.adversary_positions), start=1)
    )
    for (lo_a, hi_a, j_a), (lo_b, hi_b, j_b) in zip(zones, zones[1:]):
        if lo_b <= hi_a:
            raise ValueError(
                f"Overwatch heuristic is undefined for overlapping risk zones "
                f"(adversary {j_a} [{lo_a}, {hi_a}] and adversary {j_b} [{lo_b}, {hi_b}])"
            )
    return zones


def overwatch_heuristic(state, cfg):
    """
    Bounding overwatch per zone: one robot crosses at full speed while the
    others hold at a zero-risk boundary guarding that zone's adversary, then
    the roles switch. Robots away from zones move at full speed.
    """
    L = cfg.route_length
    reach = cfg.v_max * cfg.dt
    zones = _ordered_zones(state, cfg)
    positions = state.positions
    n = len(positions)
    speeds = [cfg.v_max if s < L else 0.0 for s in positions]
    guards = [zones[0][2] if zones else 0 for _ in positions]
    decided = [s >= L for s in positions]

    for lo, hi, j in zones:
        pending = [i for i in range(n) if positions[i] < hi and not decided[i]]
        crossing = [i for i in pending if lo < positions[i] < hi]
        waiting = [i for i in pending if abs(positions[i] - lo) <= BOUNDARY_TOLERANCE]
        approaching = [i for i in pending if positions[i] < lo - BOUNDARY_TOLERANCE]
        exit_guards = [
            i for i in range(n)
            if not decided[i] and abs(positions[i] - hi) <= BOUNDARY_TOLERANCE and positions[i] < L
        ]

        # Only one robot is dispatched into a clear zone at a time.
        if not crossing and waiting:
            crossing = [waiting.pop(0)]

        for i in crossing:
            speeds[i] = cfg.v_max
            guards[i] = j
            decided[i] = True

        for i in waiting:
            speeds[i] = 0.0
            guards[i] = j
            decided[i] = True

        for i in approaching:
            guards[i] = j
            if len(pending) > 1 and positions[i] + reach > lo:
                speeds[i] = (lo - positions[i]) / cfg.dt
            decided[i] = True

        # Robots that already crossed hold at the exit boundary until the zone is clear.
        if crossing or waiting:
            for i in exit_guards:
                speeds[i] = 0.0
                guards[i] = j
                decided[i] = True

    return HybridAction(speeds=tuple(float(v) for v in speeds), guards=tuple(guards))


@dataclass(frozen=True)
class SweepPoint:
    speed: float
    cost: float
    steps: int


def constant_speed_sweep(cfg, speeds, fine_dt=0.01):
    """
    Cost of crossing the whole route at each constant speed for a single robot
    facing a single adversary, guarding it itself the whole way.
    """
    if cfg.n_robots != 1 or cfg.n_adversaries != 1:
        raise ValueError(
            f"Constant-speed sweep needs one robot and one adversary, "
            f"got {cfg.n_robots} and {cfg.n_adversaries}"
        )
    if not 0 < fine_dt <= 0.01:
        raise ValueError(f"Sweep step must be in (0, 0.01], got {fine_dt}")
    adv = cfg.adversaries[0]
    lo, hi = adv.zone(cfg.route_length)
    points = []
    for v in sorted(float(v) for v in speeds):
        if not 0 < v <= cfg.v_max:
            raise ValueError(f"Sweep speed {v} must be in (0, {cfg.v_max}]")
        n_steps = int(math.ceil(cfg.route_length / (v * fine_dt) - 1e-12))
        s = np.minimum(np.arange(n_steps) * v * fine_dt, cfg.route_length)
        alpha = np.where((s >= lo) & (s <= hi), 1.0 - adv.beta * (cfg.v_max - v) / cfg.v_max, 1.0)
        exposure = alpha * risk_values(s, adv) + cfg.time_penalty
        points.append(SweepPoint(v, math.fsum(exposure * fine_dt), n_steps))
    return points


proposition1_sweep = constant_speed_sweep


def risk_integral(cfg, adversary_index=0):
    """Exact integral of the unit risk over [0, L] (the profile is piecewise linear)."""
    adv = cfg.adversaries[adversary_index]
    L = cfg.route_length
    knots = [adv.position + k for k in adv.profile.knots()]
    xs = sorted({0.0, float(L)} | {x for x in knots if 0 < x < L})
    ys = risk_values(np.array(xs), adv)
    return math.fsum((x1 - x0) * (y0 + y1) / 2 for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:]))


def constant_speed_closed_form(cfg, v):
    """Continuous-time cost of crossing at constant speed v while self-guarding."""
    if not 0 < v <= cfg.v_max:
        raise ValueError(f"Speed {v} must be in (0, {cfg.v_max}]")
    beta = cfg.adversaries[0].beta
    return ((1 - beta) / v + beta / cfg.v_max) * risk_integral(cfg) + cfg.time_penalty * cfg.route_length / v


def main():
    parser = argparse.ArgumentParser(description="Run a reference policy on a scenario")
    parser.add_argument("scenario", help="Preset name or scenario .cfg path")
    parser.add_argument("--policy", choices=["greedy", "overwatch"], default="overwatch")
    parser.add_argument("--sweep", action="store_true", help="Print the constant-speed cost table for a single robot instead")
    args = parser.parse_args()
    if args.sweep:
        try:
            cfg = replace(resolve_scenario(args.scenario), n_robots=1)
            speeds = [k * cfg.v_max / 12 for k in range(1, 13)]
            points = constant_speed_sweep(cfg, speeds)
        except (OSError, ValueError) as e:
            print(f"Error: {e}")
            sys.exit(1)
        print(f"{'Speed':>8}{'Cost':>14}{'Closed form':>14}")
        for p in points:
            print(f"{p.speed:>8.3f}{p.cost:>14.4f}{constant_speed_closed_form(cfg, p.speed):>14.4f}")
        return
    try:
        cfg = resolve_scenario(args.scenario)
        policy = greedy_baseline if args.policy == "greedy" else overwatch_heuristic
        records = run_policy(lambda state: policy(state, cfg), cfg, initial_state(cfg))
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
    print(f"✓ {args.policy} finished in {len(records)} steps, raw return {episode_return(records):.4f}")


if __name__ == "__main__":
    main()
