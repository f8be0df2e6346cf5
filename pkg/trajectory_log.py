#!/usr/bin/env python3
"""
Per-step trajectory logs.

One row per environment step, holding the pre-move positions, the actions
actually applied, the accrued costs and both rewards. Adversary positions are
logged too so a relocation mid-episode can be replayed. Floats are written
with `repr` precision, so a replay reproduces every value exactly.
"""

import sys
from dataclasses import dataclass

from common_utils import TRAJECTORY_HEADER, check_csv_file, format_number, read_csv, write_csv
from route_env import (
    HybridAction,
    TeamState,
    advance_position,
    effective_speeds,
    is_done,
    relocate_adversary,
    step,
    validate_relocation,
)
from scenario_config import resolve_scenario


@dataclass(frozen=True)
class StepRecord:
    t: int
    positions: tuple
    speeds: tuple
    guards: tuple
    risk: tuple
    penalty: tuple
    raw_reward: float
    shaped_reward: float
    adversary_positions: tuple


def record_step(state, action, outcome, cfg):
    return StepRecord(
        t=state.step,
        positions=state.positions,
        speeds=effective_speeds(state, action, cfg),
        guards=tuple(int(g) for g in action.guards),
        risk=outcome.risk,
        penalty=outcome.penalty,
        raw_reward=outcome.raw_reward,
        shaped_reward=outcome.shaped_reward,
        adversary_positions=state.adversary_positions,
    )


def log_columns(n_robots, n_adversaries):
    columns = ["t"]
    for prefix in ("s", "v", "g", "R", "P"):
        columns.extend(f"{prefix}_{i}" for i in range(1, n_robots + 1))
    columns.extend(["raw_reward", "shaped_reward"])
    columns.extend(f"z_{j}" for j in range(1, n_adversaries + 1))
    return columns


def _row(record):
    values = [str(record.t)]
    values.extend(format_number(s) for s in record.positions)
    values.extend(format_number(v) for v in record.speeds)
    values.extend(str(g) for g in record.guards)
    values.extend(format_number(r) for r in record.risk)
    values.extend(format_number(p) for p in record.penalty)
    values.append(format_number(record.raw_reward))
    values.append(format_number(record.shaped_reward))
    values.extend(format_number(z) for z in record.adversary_positions)
    return values


def write_trajectory(path, records, cfg):
    columns = log_columns(cfg.n_robots, cfg.n_adversaries)
    return write_csv(path, TRAJECTORY_HEADER, columns, [_row(r) for r in records])


def _block(row, columns, prefix, count, cast=float):
    return tuple(cast(row[columns.index(f"{prefix}_{i}")]) for i in range(1, count + 1))


def read_trajectory(path, cfg):
    columns, rows = read_csv(path, TRAJECTORY_HEADER)
    expected = log_columns(cfg.n_robots, cfg.n_adversaries)
    if columns != expected:
        raise ValueError(f"{path}: columns {columns} do not match scenario layout {expected}")
    n, m = cfg.n_robots, cfg.n_adversaries
    records = []
    for row in rows:
        records.append(
            StepRecord(
                t=int(row[0]),
                positions=_block(row, columns, "s", n),
                speeds=_block(row, columns, "v", n),
                guards=_block(row, columns, "g", n, int),
                risk=_block(row, columns, "R", n),
                penalty=_block(row, columns, "P", n),
                raw_reward=float(row[columns.index("raw_reward")]),
                shaped_reward=float(row[columns.index("shaped_reward")]),
                adversary_positions=_block(row, columns, "z", m),
            )
        )
    return records


def validate_trajectory_file(path, cfg):
    columns = log_columns(cfg.n_robots, cfg.n_adversaries)
    return check_csv_file(path, TRAJECTORY_HEADER, columns, numeric_columns=columns)


def final_positions(records, cfg):
    """Positions after the last logged step, derived from the log alone."""
    if not records:
        return tuple(0.0 for _ in range(cfg.n_robots))
    last = records[-1]
    return tuple(advance_position(s, v, cfg) for s, v in zip(last.positions, last.speeds))


def episode_return(records, shaped=False):
    total = 0.0
    for record in records:
        total += record.shaped_reward if shaped else record.raw_reward
    return total


def run_policy(policy, cfg, state, relocation=None):
    """
    Rolls a state -> HybridAction policy to the end of the episode.

    relocation is an optional (step, adversary, new_z) applied before that step.
    Returns the StepRecords.
    """
    relocation = validate_relocation(relocation, cfg)
    records = []
    while not is_done(state, cfg):
        if relocation is not None and state.step == relocation[0]:
            state = relocate_adversary(state, relocation[1], relocation[2], cfg)
        action = policy(state)
        outcome = step(state, action, cfg)
        records.append(record_step(state, action, outcome, cfg))
        state = outcome.next_state
    return records


def replay_records(records, cfg):
    """
    Re-runs every logged step through the environment and compares.

    Returns a list of mismatch descriptions; an empty list means the log is
    consistent with the dynamics bit for bit.
    """
    issues = []
    if not records:
        return issues
    expected_positions = records[0].positions
    for number, record in enumerate(records):
        if record.t != number:
            issues.append(f"Row {number}: step index {record.t}, expected {number}")
        if record.positions != expected_positions:
            issues.append(
                f"Row {number}: positions {record.positions} do not follow from the previous step "
                f"{expected_positions}"
            )
        state = TeamState(record.positions, record.adversary_positions, record.t)
        try:
            outcome = step(state, HybridAction(record.speeds, record.guards), cfg)
        except (ValueError, RuntimeError) as e:
            issues.append(f"Row {number}: {e}")
            break
        if outcome.risk != record.risk:
            issues.append(f"Row {number}: risk {record.risk} != replayed {outcome.risk}")
        if outcome.penalty != record.penalty:
            issues.append(f"Row {number}: penalty {record.penalty} != replayed {outcome.penalty}")
        if outcome.raw_reward != record.raw_reward:
            issues.append(
                f"Row {number}: raw reward {record.raw_reward!r} != replayed {outcome.raw_reward!r}"
            )
        if outcome.shaped_reward != record.shaped_reward:
            issues.append(
                f"Row {number}: shaped reward {record.shaped_reward!r} != replayed "
                f"{outcome.shaped_reward!r}"
            )
        expected_positions = outcome.next_state.positions
        if outcome.done and number != len(records) - 1:
            issues.append(f"Row {number}: episode ended but {len(records) - number - 1} rows follow")
            break
    return issues


if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("Usage: python trajectory_log.py <scenario> <trajectory.csv>")
        sys.exit(1)
    try:
        cfg = resolve_scenario(sys.argv[1])
        if not validate_trajectory_file(sys.argv[2], cfg):
            sys.exit(1)
        problems = replay_records(read_trajectory(sys.argv[2], cfg), cfg)
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
    if problems:
        print(f"Found {len(problems)} replay mismatches:")
        for problem in problems[:10]:
            print(f"- {problem}")
        sys.exit(1)
    print("✓ Trajectory replays exactly.")
