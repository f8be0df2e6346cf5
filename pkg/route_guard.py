#!/usr/bin/env python3
"""
Command-line entry point for route-guard experiments:
1. simulate        Run a reference policy and write its trajectory log
2. train           Train d-ppo or h-ppo policies (one per seed)
3. evaluate        Run a saved checkpoint on a placement
4. oracle          Solve a grid instance exactly and roll out the optimum
5. compare         Build the method comparison table for a scenario
6. check-behavior  Read a trajectory log for the bounding-overwatch pattern
7. export-plots    Turn a trajectory log into plot-ready CSV files

Every run keeps a transcript in run_logs/. The exit code is 0 only when every
file the command wrote passes its schema check.
"""

import argparse
import contextlib
import os
import sys
import threading
import time
import traceback
from datetime import datetime

try:
    import baseline_policies
    import common_utils
    import exact_oracle
    import experiment_harness
    import ppo_trainer
    import route_env
    import scenario_config
    import trajectory_log
except ImportError as e:
    print(f"Error: Could not import required modules: {e}")
    print("Please ensure all required .py scripts are in the same directory.")
    sys.exit(1)


def print_step_summary(step_name, start_time):
    """Print elapsed time of one command step."""
    duration = time.time() - start_time
    print(f"{step_name} duration: {common_utils.format_duration(duration)}")


class _TeeTextStream:
    """Write console output to the terminal and a run log."""

    def __init__(self, terminal_stream, log_stream):
        self.terminal_stream = terminal_stream
        self.log_stream = log_stream
        self._lock = threading.Lock()

    def write(self, text):
        with self._lock:
            self.terminal_stream.write(text)
            self.log_stream.write(text)
        return len(text)

    def flush(self):
        with self._lock:
            self.terminal_stream.flush()
            self.log_stream.flush()

    def isatty(self):
        return self.terminal_stream.isatty()

    @property
    def encoding(self):
        return self.terminal_stream.encoding


def run_with_log(argv=None, log_dir=None):
    """Run one command while keeping its complete console transcript. Returns the exit code."""
    log_dir = log_dir or common_utils.RUN_LOG_DIR
    os.makedirs(log_dir, exist_ok=True)
    timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S-%f")
    log_path = os.path.abspath(os.path.join(log_dir, f"route_guard_run_{timestamp}.txt"))

    with open(log_path, "w", encoding="utf-8", buffering=1) as log_file:
        stdout_tee = _TeeTextStream(sys.stdout, log_file)
        stderr_tee = _TeeTextStream(sys.stderr, log_file)
        with contextlib.redirect_stdout(stdout_tee), contextlib.redirect_stderr(stderr_tee):
            print(f"Run log: {log_path}")
            try:
                exit_code = main(argv)
            finally:
                print(f"\nRun log saved to: {log_path}")
    return exit_code


def print_run_parameters(args, cfg):
    """Print the effective parameters of this run for the run log."""
    print("\n" + "=" * 60)
    print("RUN PARAMETERS")
    print("=" * 60)
    print(f"Command: {args.command}")
    print(scenario_config.describe_scenario(cfg))
    print(f"Seed: {args.seed}")
    print(f"Output directory: {os.path.abspath(args.out)}")
    print(f"Oracle cache: {'disabled' if args.no_cache else common_utils.CACHE_DIR}")
    for key, value in sorted(vars(args).items()):
        if key in ("command", "scenario", "seed", "out", "no_cache", "handler"):
            continue
        print(f"{key.replace('_', ' ').capitalize()}: {value}")
    print("=" * 60)


def parse_placement(text):
    if not text:
        return None
    return tuple(float(part) for part in text.split(",") if part.strip())


def parse_placement_mode(text):
    """'fixed', 'sampled', or placements separated by ';', for example '25,43;27,41'."""
    if not text or text in (experiment_harness.FIXED, experiment_harness.SAMPLED):
        return text or experiment_harness.FIXED
    return [parse_placement(part) for part in text.split(";") if part.strip()]


def parse_relocation(text):
    """'step:adversary:new_z', for example '10:1:38'."""
    if not text:
        return None
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Relocation must look like 'step:adversary:new_z', got '{text}'")
    return (int(parts[0]), int(parts[1]), float(parts[2]))


def _train_config(args):
    if getattr(args, "config", None):
        return ppo_trainer.load_train_config(args.config)
    return ppo_trainer.TrainConfig().validate()


def _seeds(args, tc):
    count = args.seeds if getattr(args, "seeds", None) else tc.seed_count
    return tuple(range(args.seed, args.seed + count))


def _write_log(records, cfg, path):
    trajectory_log.write_trajectory(path, records, cfg)
    print(f"✓ Trajectory log: {path}")
    return trajectory_log.validate_trajectory_file(path, cfg)


def cmd_simulate(args, cfg):
    placement = parse_placement(args.placement)
    state = route_env.initial_state(cfg, placement)
    if args.policy == "greedy":
        policy = lambda s: baseline_policies.greedy_baseline(s, cfg)
    elif args.policy == "overwatch":
        policy = lambda s: baseline_policies.overwatch_heuristic(s, cfg)
    else:
        full_speed = route_env.HybridAction(
            tuple(cfg.v_max for _ in range(cfg.n_robots)),
            tuple(1 if cfg.n_adversaries else 0 for _ in range(cfg.n_robots)),
        )
        policy = lambda s: full_speed
    records = trajectory_log.run_policy(policy, cfg, state, parse_relocation(args.relocate))
    print(f"{args.policy}: {len(records)} steps, raw return {trajectory_log.episode_return(records):.6f}")
    path = os.path.join(args.out, f"{cfg.name}_{args.policy}_simulate.csv")
    return _write_log(records, cfg, path)


def cmd_train(args, cfg):
    tc = _train_config(args)
    valid = True
    for seed in _seeds(args, tc):
        step_start = time.time()
        checkpoint = os.path.join(args.out, f"{cfg.name}_{args.variant}_seed{seed}.ckpt")
        params, curves = ppo_trainer.train(cfg, tc, args.variant, seed, checkpoint)
        curves_path = ppo_trainer.write_curves(
            os.path.join(args.out, f"{cfg.name}_{args.variant}_seed{seed}.curves.csv"), curves
        )
        print(f"✓ Learning curve: {curves_path}")
        valid = ppo_trainer.validate_curves_file(curves_path) and valid
        print_step_summary(f"Seed {seed}", step_start)
    return valid


def cmd_evaluate(args, cfg):
    params = ppo_trainer.load_policy(args.checkpoint, cfg)
    placement = parse_placement(args.placement) or tuple(adv.position for adv in cfg.adversaries)
    records = ppo_trainer.evaluate_policy(
        params, cfg, [placement], deterministic=not args.stochastic,
        relocation=parse_relocation(args.relocate), seed=args.seed,
    )[0]
    print(f"{params.variant}: {len(records)} steps, raw return {trajectory_log.episode_return(records):.6f}")
    name = os.path.splitext(os.path.basename(args.checkpoint))[0]
    return _write_log(records, cfg, os.path.join(args.out, f"{name}_evaluate.csv"))


def cmd_oracle(args, cfg):
    instance = exact_oracle.make_instance(cfg, adversary_positions=parse_placement(args.placement))
    solution = exact_oracle.solve_exact(
        instance, discount=args.discount, shaped=args.shaped, use_cache=not args.no_cache
    )
    print(f"Optimal return: {solution.optimal_return:.6f}")
    records = exact_oracle.oracle_rollout(solution)
    return _write_log(records, cfg, os.path.join(args.out, f"{cfg.name}_oracle.csv"))


def cmd_compare(args, cfg):
    tc = _train_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in experiment_harness.METHODS]
    if unknown:
        raise ValueError(f"Unknown methods: {', '.join(unknown)}")
    _, _, valid = experiment_harness.compare_methods(
        cfg, methods, _seeds(args, tc), args.out, tc, use_cache=not args.no_cache,
        placement=parse_placement_mode(args.placements),
    )
    return valid


def cmd_check_behavior(args, cfg):
    if not trajectory_log.validate_trajectory_file(args.log, cfg):
        return False
    records = trajectory_log.read_trajectory(args.log, cfg)
    report = experiment_harness.detect_overwatch(records, cfg, args.tolerance)
    print(experiment_harness.format_behavior_report(report))
    return True


def cmd_export_plots(args, cfg):
    if not trajectory_log.validate_trajectory_file(args.log, cfg):
        return False
    records = trajectory_log.read_trajectory(args.log, cfg)
    prefix = os.path.splitext(os.path.basename(args.log))[0]
    paths = experiment_harness.export_plotdata(records, cfg, args.out, prefix)
    for path in paths:
        print(f"✓ Plot data: {path}")
    return True


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="m1", help="Preset name (m1, m1_small, m2, m3) or .cfg path")
    common.add_argument("--seed", type=int, default=0, help="Base random seed")
    common.add_argument("--out", default=common_utils.OUT_DIR, help="Output directory")
    common.add_argument("--no-cache", action="store_true", help="Ignore cached oracle solutions")

    parser = argparse.ArgumentParser(
        description="Multi-robot route traversal with guard actions: simulation, training and evaluation"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Run a reference policy")
    simulate.add_argument("--policy", choices=["greedy", "overwatch", "full-speed"], default="overwatch")
    simulate.add_argument("--placement", help="Adversary positions, comma separated")
    simulate.add_argument("--relocate", help="Relocate an adversary mid-episode: step:adversary:new_z")
    simulate.set_defaults(handler=cmd_simulate)

    train = commands.add_parser("train", parents=[common], help="Train PPO policies")
    train.add_argument("--variant", choices=ppo_trainer.VARIANTS, default=ppo_trainer.D_PPO)
    train.add_argument("--config", help="Train config file")
    train.add_argument("--seeds", type=int, help="Number of seeds (default: seed_count from the config)")
    train.set_defaults(handler=cmd_train)

    evaluate = commands.add_parser("evaluate", parents=[common], help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--placement", help="Adversary positions, comma separated")
    evaluate.add_argument("--relocate", help="Relocate an adversary mid-episode: step:adversary:new_z")
    evaluate.add_argument("--stochastic", action="store_true", help="Sample actions instead of the mode")
    evaluate.set_defaults(handler=cmd_evaluate)

    oracle = commands.add_parser("oracle", parents=[common], help="Solve a grid instance exactly")
    oracle.add_argument("--placement", help="Adversary positions, comma separated")
    oracle.add_argument("--discount", type=float, default=1.0)
    oracle.add_argument("--shaped", action="store_true", help="Optimize the shaped reward")
    oracle.set_defaults(handler=cmd_oracle)

    compare = commands.add_parser("compare", parents=[common], help="Build the comparison table")
    compare.add_argument("--methods", default=",".join(experiment_harness.METHODS))
    compare.add_argument("--config", help="Train config file for the PPO methods")
    compare.add_argument("--seeds", type=int, help="Number of seeds for the PPO methods")
    compare.add_argument(
        "--placements", default="fixed",
        help="Adversary placements: fixed, sampled, or a ';'-separated list cycled over episodes",
    )
    compare.set_defaults(handler=cmd_compare)

    check = commands.add_parser("check-behavior", parents=[common], help="Detect bounding overwatch in a log")
    check.add_argument("--log", required=True)
    check.add_argument("--tolerance", type=float, default=experiment_harness.DETECTION_TOLERANCE)
    check.set_defaults(handler=cmd_check_behavior)

    export = commands.add_parser("export-plots", parents=[common], help="Export plot data from a log")
    export.add_argument("--log", required=True)
    export.set_defaults(handler=cmd_export_plots)
    return parser


def main(argv=None):
    script_start_dt = datetime.now()
    args = build_parser().parse_args(argv)

    print("=" * 60)
    print(f"Route Guard - {args.command}")
    print(f"Started at: {script_start_dt.strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 60)

    try:
        cfg = scenario_config.resolve_scenario(args.scenario)
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        return 2

    print_run_parameters(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    start_time = time.time()
    try:
        valid = args.handler(args, cfg)
    except (OSError, ValueError, exact_oracle.OracleBudgetError, ppo_trainer.TrainingDivergedError) as e:
        print(f"Error: {e}")
        return 1
    except Exception as e:
        print(f"Error during {args.command}: {e}")
        traceback.print_exc()
        return 1

    print("=" * 60)
    print("COMMAND COMPLETE!" if valid else "COMMAND FINISHED WITH SCHEMA ERRORS")
    print("=" * 60)
    print_step_summary("Total", start_time)
    return 0 if valid else 1


if __name__ == "__main__":
    sys.exit(run_with_log(sys.argv[1:]))
