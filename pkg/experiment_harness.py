#!/usr/bin/env python3
"""
Experiment harness: runs one method on one scenario, compares methods,
checks trajectories for the bounding-overwatch pattern and exports plot data.
"""

import math
import os
import sys
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from baseline_policies import greedy_baseline, overwatch_heuristic
from common_utils import (
    COMPARISON_HEADER,
    OUT_DIR,
    PLOT_HEADER,
    check_csv_file,
    format_duration,
    format_number,
    write_csv,
)
from exact_oracle import OracleBudgetError, make_instance, oracle_rollout, solve_exact
from ppo_trainer import (
    VARIANTS,
    TrainConfig,
    TrainingDivergedError,
    episodes_to_converge,
    evaluate_policy,
    load_policy,
    train,
    validate_curves_file,
    write_curves,
)
from route_env import initial_state, sample_adversary_positions, validate_relocation
from scenario_config import resolve_scenario
from trajectory_log import (
    episode_return,
    final_positions,
    run_policy,
    validate_trajectory_file,
    write_trajectory,
)

ORACLE = "oracle"
GREEDY = "greedy"
OVERWATCH = "overwatch"
DETERMINISTIC_METHODS = (ORACLE, GREEDY, OVERWATCH)
METHODS = DETERMINISTIC_METHODS + VARIANTS

FIXED = "fixed"
SAMPLED = "sampled"

DETECTION_TOLERANCE = 0.5
SPEED_EPSILON = 1e-9

COMPARISON_COLUMNS = [
    "scenario",
    "method",
    "mean_return",
    "std_return",
    "seeds",
    "episodes_to_converge",
    "note",
]


@dataclass
class ExperimentSpec:
    cfg: object
    method: str
    seeds: tuple = (0,)
    # "fixed" uses the configured positions, "sampled" draws per seed, a list
    # of position tuples is cycled over the episodes
    placement: object = FIXED
    relocation: tuple = None  # (step, adversary, new_z)
    out_dir: str = OUT_DIR
    train_config: TrainConfig = field(default_factory=TrainConfig)
    checkpoint: str = None
    use_cache: bool = True


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    method: str
    mean_return: float
    std_return: float
    seeds: int
    episodes_to_converge: float = None
    wall_seconds: float = 0.0
    note: str = ""

    def values(self):
        def number(value):
            if value is None or (isinstance(value, float) and not math.isfinite(value)):
                return "N/A"
            return format_number(value)

        return [
            self.scenario,
            self.method,
            number(self.mean_return),
            number(self.std_return),
            str(self.seeds),
            number(self.episodes_to_converge),
            self.note,
        ]


@dataclass(frozen=True)
class BehaviorReport:
    """overwatch_detected is False when no robot ever moves strictly inside a zone."""

    overwatch_detected: bool
    guard_at_boundary_fraction: float
    intermediate_speed_steps: int
    all_arrived: bool
    early_departure_steps: int = 0
    crossing_steps: int = 0


def _validate_spec(spec):
    cfg = spec.cfg
    if spec.method not in METHODS:
        raise ValueError(f"Unknown method '{spec.method}', expected one of {METHODS}")
    if not spec.seeds:
        raise ValueError("At least one seed is required")
    if isinstance(spec.placement, str):
        if spec.placement not in (FIXED, SAMPLED):
            raise ValueError(
                f"Unknown placement mode '{spec.placement}', expected '{FIXED}', '{SAMPLED}' or a list of placements"
            )
    else:
        if not spec.placement:
            raise ValueError("A placement list needs at least one entry")
        for placement in spec.placement:
            initial_state(cfg, placement)
    validate_relocation(spec.relocation, cfg)


def _placement(spec, index, seed):
    """Adversary positions for the index-th episode of the run."""
    cfg = spec.cfg
    if spec.placement == FIXED:
        return tuple(float(adv.position) for adv in cfg.adversaries)
    if spec.placement == SAMPLED:
        return sample_adversary_positions(cfg, np.random.default_rng(seed))
    return tuple(float(z) for z in spec.placement[index % len(spec.placement)])


def _log_path(spec, tag, suffix="csv"):
    return os.path.join(spec.out_dir, f"{spec.cfg.name}_{spec.method}_{tag}.{suffix}")


def _deterministic_records(spec, placement):
    cfg = spec.cfg
    if spec.method == ORACLE:
        if spec.relocation is not None:
            raise ValueError("The oracle is solved for a fixed placement and cannot follow a relocation")
        solution = solve_exact(make_instance(cfg, adversary_positions=placement), use_cache=spec.use_cache)
        return oracle_rollout(solution)
    policy = greedy_baseline if spec.method == GREEDY else overwatch_heuristic
    return run_policy(lambda state: policy(state, cfg), cfg, initial_state(cfg, placement), spec.relocation)


def _deterministic_episodes(spec):
    """(log tag, placement) pairs: one per listed placement, else one for the first seed."""
    if isinstance(spec.placement, str):
        seed = spec.seeds[0]
        return [(f"seed{seed}", _placement(spec, 0, seed))]
    return [(f"placement{k}", _placement(spec, k, None)) for k in range(len(spec.placement))]


def run_experiment(spec):
    """
    Runs spec.method and writes one trajectory log per episode.

    Deterministic methods run once per listed placement, or once in total
    for the fixed and sampled modes (std 0, seeds 1). PPO methods train per
    seed unless a checkpoint is given; seed k plays placement k of a list,
    wrapping around. Returns (ComparisonRow, log paths); raises ValueError
    for a bad placement or relocation and RuntimeError when a written file
    fails its schema check.
    """
    _validate_spec(spec)
    cfg = spec.cfg
    os.makedirs(spec.out_dir, exist_ok=True)
    start = time.time()
    log_paths = []

    if spec.method in DETERMINISTIC_METHODS:
        returns = []
        for tag, placement in _deterministic_episodes(spec):
            records = _deterministic_records(spec, placement)
            log_paths.append(write_trajectory(_log_path(spec, tag), records, cfg))
            returns.append(episode_return(records))
        converge = None
    else:
        returns = []
        converge_points = []
        for index, seed in enumerate(spec.seeds):
            if spec.checkpoint:
                params = load_policy(spec.checkpoint, cfg)
            else:
                checkpoint_path = _log_path(spec, f"seed{seed}", "ckpt")
                params, curves = train(cfg, spec.train_config, spec.method, seed, checkpoint_path)
                curves_path = write_curves(_log_path(spec, f"seed{seed}", "curves.csv"), curves)
                log_paths.append(curves_path)
                episodes = episodes_to_converge(curves)
                if episodes is not None:
                    converge_points.append(episodes)
            placement = _placement(spec, index, seed)
            records = evaluate_policy(params, cfg, [placement], relocation=spec.relocation)[0]
            log_paths.append(write_trajectory(_log_path(spec, f"seed{seed}"), records, cfg))
            returns.append(episode_return(records))
        converge = float(np.mean(converge_points)) if converge_points else None

    failed = [
        path for path in log_paths
        if not (validate_curves_file(path) if path.endswith(".curves.csv") else validate_trajectory_file(path, cfg))
    ]
    if failed:
        raise RuntimeError(f"Schema validation failed for: {', '.join(failed)}")

    row = ComparisonRow(
        scenario=cfg.name,
        method=spec.method,
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)) if len(returns) > 1 else 0.0,
        seeds=len(returns),
        episodes_to_converge=converge,
        wall_seconds=time.time() - start,
    )
    print(
        f"✓ {spec.method} on {cfg.name}: mean return {row.mean_return:.4f} "
        f"(std {row.std_return:.4f}, {row.seeds} seed(s)) in {format_duration(row.wall_seconds)}"
    )
    return row, log_paths


def _near(value, target, tolerance):
    return abs(value - target) <= tolerance


def _boundary_guards(record, zones, tolerance, L):
    """(robot, adversary) pairs holding still at a zone boundary while guarding it."""
    pairs = set()
    for i, (s, v, g) in enumerate(zip(record.positions, record.speeds, record.guards)):
        if s >= L or v > SPEED_EPSILON or not 1 <= g <= len(zones):
            continue
        lo, hi = zones[g - 1]
        if _near(s, lo, tolerance) or _near(s, hi, tolerance):
            pairs.add((i, g))
    return pairs


def detect_overwatch(records, cfg, tolerance=DETECTION_TOLERANCE):
    """
    Reads a trajectory log for the bounding-overwatch pattern: every step in
    which a robot moves strictly inside a zone has a teammate holding still
    within `tolerance` of that zone's boundary, guarding its adversary.

    An episode with no in-zone movement at all (crossing_steps == 0) reports
    overwatch_detected=False rather than a vacuous True.

    Early departures count guards that held at a boundary on the previous step
    and now move while a teammate is still strictly inside that zone.
    """
    L = cfg.route_length
    crossing_steps = 0
    covered_steps = 0
    holding_steps = 0
    boundary_holding_steps = 0
    intermediate_steps = 0
    early_departures = 0
    previous_guards = set()

    for record in records:
        zones = cfg.zones(record.adversary_positions)
        live = [i for i, s in enumerate(record.positions) if s < L]
        guards = _boundary_guards(record, zones, tolerance, L)

        for i in live:
            v = record.speeds[i]
            if v <= SPEED_EPSILON:
                holding_steps += 1
            elif v < cfg.v_max - SPEED_EPSILON:
                intermediate_steps += 1
        boundary_holding_steps += len(guards)

        for j, (lo, hi) in enumerate(zones, start=1):
            inside = [i for i in live if lo < record.positions[i] < hi]
            for i in inside:
                if record.speeds[i] <= SPEED_EPSILON:
                    continue
                crossing_steps += 1
                if any(k != i and g == j for k, g in guards):
                    covered_steps += 1
            for k, g in previous_guards:
                if g == j and record.speeds[k] > SPEED_EPSILON and any(i != k for i in inside):
                    early_departures += 1
        previous_guards = guards

    return BehaviorReport(
        overwatch_detected=crossing_steps > 0 and covered_steps == crossing_steps,
        guard_at_boundary_fraction=boundary_holding_steps / holding_steps if holding_steps else 0.0,
        intermediate_speed_steps=intermediate_steps,
        all_arrived=all(s >= L for s in final_positions(records, cfg)),
        early_departure_steps=early_departures,
        crossing_steps=crossing_steps,
    )


def format_behavior_report(report):
    lines = [
        "=" * 60,
        "BEHAVIOR REPORT",
        "=" * 60,
        f"Overwatch detected:          {report.overwatch_detected}",
        f"Guard-at-boundary fraction:  {report.guard_at_boundary_fraction:.3f}",
        f"Intermediate-speed steps:    {report.intermediate_speed_steps}",
        f"Early departures:            {report.early_departure_steps}",
        f"In-zone moving steps:        {report.crossing_steps}",
        f"All robots arrived:          {report.all_arrived}",
        "=" * 60,
    ]
    return "\n".join(lines)


def export_plotdata(records, cfg, out_dir, prefix="episode"):
    """
    Writes three plot-ready CSV files: robot positions over time (with the
    final positions as the last row), per-step guard assignments, and the
    risk-zone band of every adversary at every step.
    """
    n, m = cfg.n_robots, cfg.n_adversaries
    position_rows = [[str(r.t)] + [format_number(s) for s in r.positions] for r in records]
    if records:
        position_rows.append(
            [str(records[-1].t + 1)] + [format_number(s) for s in final_positions(records, cfg)]
        )
    guard_rows = []
    zone_rows = []
    for r in records:
        zones = cfg.zones(r.adversary_positions)
        for i in range(n):
            holding = r.speeds[i] <= SPEED_EPSILON and r.positions[i] < cfg.route_length
            guard_rows.append([
                str(r.t), str(i + 1), format_number(r.positions[i]), format_number(r.speeds[i]),
                str(r.guards[i]), "1" if holding else "0",
            ])
        for j in range(m):
            lo, hi = zones[j]
            zone_rows.append([
                str(r.t), str(j + 1), format_number(r.adversary_positions[j]),
                format_number(lo), format_number(hi), format_number(cfg.adversaries[j].profile.max_risk),
            ])

    os.makedirs(out_dir, exist_ok=True)
    files = [
        (f"{prefix}_positions.csv", ["t"] + [f"s_{i}" for i in range(1, n + 1)], position_rows),
        (f"{prefix}_guards.csv", ["t", "robot", "s", "v", "guard", "holding"], guard_rows),
        (f"{prefix}_zones.csv", ["t", "adversary", "z", "lo", "hi", "peak_risk"], zone_rows),
    ]
    paths = []
    for name, columns, rows in files:
        path = write_csv(os.path.join(out_dir, name), PLOT_HEADER, columns, rows)
        if not check_csv_file(path, PLOT_HEADER, columns, numeric_columns=columns):
            raise RuntimeError(f"Schema validation failed for {path}")
        paths.append(path)
    return paths


def format_comparison_table(rows):
    header = f"{'Method':<12}{'Mean return':>14}{'Std':>10}{'Seeds':>7}{'Episodes to converge':>22}  Note"
    lines = [COMPARISON_HEADER, f"Scenario: {rows[0].scenario if rows else 'N/A'}", header, "-" * len(header)]
    for row in rows:
        _, method, mean, std, seeds, episodes, note = row.values()
        lines.append(f"{method:<12}{mean:>14}{std:>10}{seeds:>7}{episodes:>22}  {note}".rstrip())
    return "\n".join(lines) + "\n"


def compare_methods(cfg, methods, seeds, out_dir=OUT_DIR, train_config=None, use_cache=True, placement=FIXED):
    """
    Runs every method on the given placement mode (see ExperimentSpec) and
    writes the comparison table (text and CSV) plus a separate timing file.
    A method that cannot run becomes an N/A row with the reason in the note.
    """
    train_config = train_config or TrainConfig()
    rows = []
    for method in methods:
        print("\n" + "=" * 60)
        print(f"METHOD: {method}")
        print("=" * 60)
        spec = ExperimentSpec(
            cfg=cfg,
            method=method,
            seeds=tuple(seeds),
            placement=placement,
            out_dir=out_dir,
            train_config=train_config,
            use_cache=use_cache,
        )
        try:
            row, _ = run_experiment(spec)
        except (OracleBudgetError, TrainingDivergedError, ValueError) as e:
            print(f"Warning: {method} skipped: {e}")
            row = ComparisonRow(cfg.name, method, float("nan"), float("nan"), 0, note=str(e))
        except RuntimeError as e:
            print(f"Error: {method} failed: {e}")
            traceback.print_exc()
            row = ComparisonRow(cfg.name, method, float("nan"), float("nan"), 0, note=str(e))
        rows.append(row)

    os.makedirs(out_dir, exist_ok=True)
    table_path = os.path.join(out_dir, f"{cfg.name}_comparison.txt")
    with open(table_path, "w", encoding="utf-8") as f:
        f.write(format_comparison_table(rows))
    csv_path = write_csv(
        os.path.join(out_dir, f"{cfg.name}_comparison.csv"),
        COMPARISON_HEADER,
        COMPARISON_COLUMNS,
        [row.values() for row in rows],
    )
    timing_path = write_csv(
        os.path.join(out_dir, f"{cfg.name}_comparison_timing.csv"),
        COMPARISON_HEADER,
        ["method", "wall_seconds"],
        [[row.method, format_number(round(row.wall_seconds, 3))] for row in rows],
    )
    valid = check_csv_file(
        csv_path, COMPARISON_HEADER, COMPARISON_COLUMNS,
        numeric_columns=("mean_return", "std_return", "seeds", "episodes_to_converge"),
    )
    print("\n" + format_comparison_table(rows))
    print(f"✓ Comparison table: {table_path}")
    return rows, [table_path, csv_path, timing_path], valid


if __name__ == "__main__":
    scenario = sys.argv[1] if len(sys.argv) > 1 else "m1_small"
    try:
        compare_methods(resolve_scenario(scenario), DETERMINISTIC_METHODS, (0,))
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
