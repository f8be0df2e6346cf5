#!/usr/bin/env python3
"""
Centralized PPO for the team route problem, in two action parameterizations:

- d-ppo: every robot picks a speed from a discrete set and a guard target,
  both from categorical heads.
- h-ppo: every robot draws its speed from a Gaussian with a learned,
  state-independent spread and picks its guard target from a categorical head.

One actor sees the encoded team state and outputs a block of logits (or a
speed mean plus guard logits) per robot; the joint log-probability is the sum
over robots. A separate critic estimates the state value.
"""

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, fields

import numpy as np

from common_utils import (
    CURVES_HEADER,
    PPO_ROLLOUT_WORKERS,
    TRAIN_HEADER,
    check_csv_file,
    format_duration,
    format_number,
    read_key_value_file,
    write_csv,
)
from nn_core import (
    DenseNet,
    GradientTape,
    clip_by_global_norm,
    forward,
    forward_on_tape,
    load_arrays,
    make_dense_net,
    make_optimizer,
    minimum,
    net_variables,
    optimizer_step,
    save_arrays,
)
from route_env import HybridAction, initial_state, reset, step
from scenario_config import resolve_scenario
from trajectory_log import run_policy
from weighted_hot import ENCODING_MODES, encode_state, encoded_dim

D_PPO = "d-ppo"
H_PPO = "h-ppo"
VARIANTS = (D_PPO, H_PPO)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

CURVE_COLUMNS = [
    "iteration",
    "steps",
    "episodes",
    "mean_return",
    "mean_shaped_return",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "wall_seconds",
]


class TrainingDivergedError(RuntimeError):
    """Raised when probability ratios blow up or the loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 256
    rollout_length: int = 2048
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    max_grad_norm: float = 0.5
    seed_count: int = 5
    total_steps: int = 200000
    hidden_sizes: tuple = (128, 128)
    speed_levels: int = 4
    encoding: str = "weighted_hot"
    reward: str = "shaped"
    initial_log_spread: float = 0.0
    divergence_ratio: float = 10.0
    n_workers: int = PPO_ROLLOUT_WORKERS

    def validate(self):
        if not 0 < self.clip_ratio < 1:
            raise ValueError(f"clip_ratio must be in (0, 1), got {self.clip_ratio}")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.epochs < 1 or self.minibatch_size < 1 or self.rollout_length < 1:
            raise ValueError("epochs, minibatch_size and rollout_length must be positive")
        if self.minibatch_size > self.rollout_length:
            raise ValueError(
                f"minibatch_size ({self.minibatch_size}) exceeds rollout_length ({self.rollout_length})"
            )
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("entropy_coef and value_coef must be non-negative")
        if self.seed_count < 1 or self.total_steps < 1:
            raise ValueError("seed_count and total_steps must be positive")
        if self.speed_levels < 2:
            raise ValueError(f"speed_levels must be at least 2, got {self.speed_levels}")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        if self.encoding not in ENCODING_MODES:
            raise ValueError(f"encoding must be one of {ENCODING_MODES}, got '{self.encoding}'")
        if self.reward not in ("shaped", "raw"):
            raise ValueError(f"reward must be 'shaped' or 'raw', got '{self.reward}'")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be at least 1, got {self.n_workers}")
        return self


def train_config_from_values(values):
    kwargs = {}
    known = {f.name: f for f in fields(TrainConfig)}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"Unknown train config key: '{key}'")
        try:
            if key == "hidden_sizes":
                kwargs[key] = tuple(int(part) for part in raw.split(",") if part.strip())
            elif key in ("encoding", "reward"):
                kwargs[key] = raw
            elif isinstance(known[key].default, int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError:
            raise ValueError(f"Invalid value for '{key}': '{raw}'")
    return TrainConfig(**kwargs).validate()


def load_train_config(path):
    return train_config_from_values(read_key_value_file(path, TRAIN_HEADER))


@dataclass
class PolicyParams:
    variant: str
    actor: DenseNet
    critic: DenseNet
    log_spread: np.ndarray
    speed_set: tuple
    n_robots: int
    n_adversaries: int
    v_max: float
    encoding: str = "weighted_hot"

    @property
    def speed_head(self):
        return len(self.speed_set) if self.variant == D_PPO else 1

    @property
    def head_size(self):
        return self.speed_head + self.n_adversaries

    def parameters(self):
        return self.actor.parameters() + self.critic.parameters() + [self.log_spread]

    def parameter_names(self):
        return (
            self.actor.parameter_names("actor")
            + self.critic.parameter_names("critic")
            + ["log_spread"]
        )


def init_policy(cfg, tc, variant, rng):
    if variant not in VARIANTS:
        raise ValueError(f"Unknown PPO variant '{variant}', expected one of {VARIANTS}")
    input_dim = encoded_dim(cfg, tc.encoding)
    speed_set = tuple(float(v) for v in np.linspace(0.0, cfg.v_max, tc.speed_levels))
    speed_head = len(speed_set) if variant == D_PPO else 1
    output_dim = cfg.n_robots * (speed_head + cfg.n_adversaries)
    actor = make_dense_net(input_dim, tc.hidden_sizes, output_dim, rng, output_gain=0.01)
    critic = make_dense_net(input_dim, tc.hidden_sizes, 1, rng, output_gain=1.0)
    return PolicyParams(
        variant=variant,
        actor=actor,
        critic=critic,
        log_spread=np.full(cfg.n_robots, float(tc.initial_log_spread)),
        speed_set=speed_set,
        n_robots=cfg.n_robots,
        n_adversaries=cfg.n_adversaries,
        v_max=float(cfg.v_max),
        encoding=tc.encoding,
    )


def _log_softmax(x):
    shifted = x - x.max()
    return shifted - np.log(np.exp(shifted).sum())


def _draw(log_probs, rng):
    probs = np.exp(log_probs)
    cumulative = np.cumsum(probs)
    return int(min(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"),
                   len(probs) - 1))


def speed_mean(raw, v_max):
    """Speed mean from the actor's raw output; zero output maps to v_max/2."""
    return v_max * (0.5 + raw)


def sample_action(params, encoded, rng=None, deterministic=False):
    """
    Samples (or, deterministically, picks the mode of) a joint action.

    Returns (HybridAction, joint log-probability, encoded action), where the
    encoded action holds per robot [speed index or pre-clamp speed, guard index].
    """
    out = forward(params.actor, encoded)
    if out.ndim != 1:
        raise ValueError("sample_action expects a single encoded state")
    n, m, k = params.n_robots, params.n_adversaries, params.speed_head
    speeds, guards = [], []
    encoded_action = np.zeros((n, 2))
    log_prob = 0.0
    for i in range(n):
        block = out[i * params.head_size:(i + 1) * params.head_size]
        if params.variant == D_PPO:
            logp = _log_softmax(block[:k])
            index = int(np.argmax(logp)) if deterministic else _draw(logp, rng)
            log_prob += logp[index]
            speeds.append(params.speed_set[index])
            encoded_action[i, 0] = index
        else:
            mean = speed_mean(block[0], params.v_max)
            spread = math.exp(params.log_spread[i])
            x = mean if deterministic else mean + spread * rng.standard_normal()
            log_prob += -0.5 * ((x - mean) / spread) ** 2 - params.log_spread[i] - LOG_SQRT_2PI
            speeds.append(float(min(max(x, 0.0), params.v_max)))
            encoded_action[i, 0] = x
        if m:
            logp = _log_softmax(block[k:])
            index = int(np.argmax(logp)) if deterministic else _draw(logp, rng)
            log_prob += logp[index]
            guards.append(index + 1)
            encoded_action[i, 1] = index
        else:
            guards.append(0)
    return HybridAction(tuple(speeds), tuple(guards)), float(log_prob), encoded_action


def log_prob_and_entropy(params, actor_out, log_spread, actions):
    """Recorded joint log-probabilities (batch,) and mean entropy for stored actions."""
    n, m, k = params.n_robots, params.n_adversaries, params.speed_head
    log_prob = None
    entropy = None
    for i in range(n):
        base = i * params.head_size
        if params.variant == D_PPO:
            speed_logp = actor_out[:, base:base + k].log_softmax()
            robot_logp = speed_logp.gather(actions[:, i, 0].astype(int))
            robot_entropy = -(speed_logp.exp() * speed_logp).sum(axis=1)
        else:
            mean = (actor_out[:, base] + 0.5) * params.v_max
            spread_log = log_spread[i]
            z = (actions[:, i, 0] - mean) * (-spread_log).exp()
            robot_logp = -0.5 * z.square() - spread_log - LOG_SQRT_2PI
            robot_entropy = spread_log + (0.5 + LOG_SQRT_2PI)
        if m:
            guard_logp = actor_out[:, base + k:base + k + m].log_softmax()
            robot_logp = robot_logp + guard_logp.gather(actions[:, i, 1].astype(int))
            robot_entropy = robot_entropy - (guard_logp.exp() * guard_logp).sum(axis=1)
        log_prob = robot_logp if log_prob is None else log_prob + robot_logp
        entropy = robot_entropy if entropy is None else entropy + robot_entropy
    if entropy.value.ndim:
        entropy = entropy.mean()
    return log_prob, entropy


@dataclass
class RolloutBatch:
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    terminals: np.ndarray
    truncations: np.ndarray
    bootstrap_values: np.ndarray
    advantages: np.ndarray = None
    returns: np.ndarray = None

    def __len__(self):
        return len(self.rewards)

    def subset(self, index):
        return RolloutBatch(
            *(getattr(self, f.name)[index] if getattr(self, f.name) is not None else None
              for f in fields(self))
        )


def concatenate_batches(batches):
    return RolloutBatch(
        *(np.concatenate([getattr(b, f.name) for b in batches])
          if all(getattr(b, f.name) is not None for b in batches) else None
          for f in fields(RolloutBatch))
    )


def compute_advantages(batch, gamma, lam, normalize=True):
    """
    Generalized advantage estimation over a batch of consecutive segments.

    Terminal steps bootstrap from zero, truncated steps from the stored
    critic value of the state they stopped at. Returns (advantages, returns);
    returns are the unnormalized advantages plus values.
    """
    size = len(batch)
    for name in ("values", "terminals", "truncations", "bootstrap_values", "log_probs"):
        if len(getattr(batch, name)) != size:
            raise ValueError(f"Batch field '{name}' has {len(getattr(batch, name))} entries, expected {size}")
    if size == 0:
        raise ValueError("Cannot compute advantages for an empty batch")
    if not (batch.terminals[-1] or batch.truncations[-1]):
        raise ValueError("Batch ends mid-episode without a terminal or truncation marker")

    advantages = np.zeros(size)
    running = 0.0
    for t in range(size - 1, -1, -1):
        if batch.terminals[t]:
            next_value, carry = 0.0, 0.0
        elif batch.truncations[t]:
            next_value, carry = batch.bootstrap_values[t], 0.0
        else:
            next_value, carry = batch.values[t + 1], running
        delta = batch.rewards[t] + gamma * next_value - batch.values[t]
        running = delta + gamma * lam * carry
        advantages[t] = running

    returns = advantages + batch.values
    if normalize:
        advantages = (advantages - advantages.mean()) / max(1e-8, advantages.std())
    batch.advantages = advantages
    batch.returns = returns
    return advantages, returns


def ppo_loss(params, batch, clip_ratio, value_coef, entropy_coef):
    """
    Clipped surrogate + value loss - entropy bonus on one tape.
    Returns (diagnostics dict, gradients aligned with params.parameters()).
    """
    tape = GradientTape()
    actor_vars = net_variables(tape, params.actor, "actor")
    critic_vars = net_variables(tape, params.critic, "critic")
    spread_var = tape.variable(params.log_spread, "log_spread")

    actor_out = forward_on_tape(params.actor, actor_vars, batch.states)
    log_prob, entropy = log_prob_and_entropy(params, actor_out, spread_var, batch.actions)
    ratio = (log_prob - batch.log_probs).exp()
    unclipped = ratio * batch.advantages
    clipped = ratio.clip(1.0 - clip_ratio, 1.0 + clip_ratio) * batch.advantages
    policy_loss = -minimum(unclipped, clipped).mean()

    values = forward_on_tape(params.critic, critic_vars, batch.states)[:, 0]
    value_loss = (values - batch.returns).square().mean()
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy
    grads = tape.backward(loss)

    diagnostics = {
        "loss": float(loss.value),
        "policy_loss": float(policy_loss.value),
        "value_loss": float(value_loss.value),
        "entropy": float(entropy.value),
        "clip_fraction": float(np.mean(np.abs(ratio.value - 1.0) > clip_ratio)),
        "ratio_deviation": float(np.mean(np.abs(ratio.value - 1.0))),
    }
    return diagnostics, grads


def ppo_update(params, batch, tc, optimizer_state, rng):
    """Several epochs of minibatch updates on one rollout batch."""
    if len(batch) == 0:
        raise ValueError("Cannot update on an empty batch")
    if batch.advantages is None or batch.returns is None:
        raise ValueError("compute_advantages must run before ppo_update")
    names = params.parameter_names()
    totals = {}
    updates = 0
    for _ in range(tc.epochs):
        order = rng.permutation(len(batch))
        for start in range(0, len(batch), tc.minibatch_size):
            minibatch = batch.subset(order[start:start + tc.minibatch_size])
            diagnostics, grads = ppo_loss(
                params, minibatch, tc.clip_ratio, tc.value_coef, tc.entropy_coef
            )
            if not math.isfinite(diagnostics["loss"]):
                raise TrainingDivergedError(f"Loss became non-finite ({diagnostics['loss']})")
            if diagnostics["ratio_deviation"] > tc.divergence_ratio:
                raise TrainingDivergedError(
                    f"Mean |ratio - 1| reached {diagnostics['ratio_deviation']:.3g} "
                    f"(limit {tc.divergence_ratio})"
                )
            grads, _ = clip_by_global_norm(grads, tc.max_grad_norm)
            optimizer_step(optimizer_state, params.parameters(), grads, names)
            for key, value in diagnostics.items():
                totals[key] = totals.get(key, 0.0) + value
            updates += 1
    return params, {key: value / updates for key, value in totals.items()}


def _critic_value(params, encoded):
    return float(forward(params.critic, encoded)[0])


def collect_rollout(params, cfg, tc, n_steps, rng):
    """
    Runs the current policy for n_steps environment steps, resetting (and
    resampling adversary placements) after every finished episode.
    Returns (RolloutBatch, [(raw_return, shaped_return), ...] of finished episodes).
    """
    state = reset(cfg, rng)
    states, actions, log_probs, rewards, values = [], [], [], [], []
    terminals, truncations, bootstraps = [], [], []
    episodes = []
    raw_total, shaped_total = 0.0, 0.0
    for k in range(n_steps):
        encoded = encode_state(state, cfg, tc.encoding)
        action, log_prob, encoded_action = sample_action(params, encoded, rng)
        outcome = step(state, action, cfg)
        terminal = outcome.next_state.all_arrived(cfg.route_length)
        truncated = not terminal and (outcome.done or k == n_steps - 1)

        states.append(encoded)
        actions.append(encoded_action)
        log_probs.append(log_prob)
        rewards.append(outcome.shaped_reward if tc.reward == "shaped" else outcome.raw_reward)
        values.append(_critic_value(params, encoded))
        terminals.append(terminal)
        truncations.append(truncated)
        bootstraps.append(
            _critic_value(params, encode_state(outcome.next_state, cfg, tc.encoding))
            if truncated else 0.0
        )

        raw_total += outcome.raw_reward
        shaped_total += outcome.shaped_reward
        if outcome.done:
            episodes.append((raw_total, shaped_total))
            raw_total, shaped_total = 0.0, 0.0
            state = reset(cfg, rng)
        else:
            state = outcome.next_state

    batch = RolloutBatch(
        states=np.array(states),
        actions=np.array(actions),
        log_probs=np.array(log_probs),
        rewards=np.array(rewards),
        values=np.array(values),
        terminals=np.array(terminals, dtype=bool),
        truncations=np.array(truncations, dtype=bool),
        bootstrap_values=np.array(bootstraps),
    )
    return batch, episodes


def collect_rollouts(params, cfg, tc, seed, iteration):
    """
    Splits one iteration's rollout over tc.n_workers workers, each with its
    own generator seeded from (seed, iteration, worker). Results are joined in
    worker order, so a fixed worker count gives a fixed batch.
    """
    workers = min(tc.n_workers, tc.rollout_length)
    shares = [tc.rollout_length // workers] * workers
    shares[-1] += tc.rollout_length - sum(shares)
    generators = [np.random.default_rng([seed, iteration, w]) for w in range(workers)]

    if workers == 1:
        results = [collect_rollout(params, cfg, tc, shares[0], generators[0])]
    else:
        results = [None] * workers
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(collect_rollout, params, cfg, tc, shares[w], generators[w]): w
                for w in range(workers)
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    batch = concatenate_batches([r[0] for r in results])
    episodes = [episode for r in results for episode in r[1]]
    return batch, episodes


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    steps: int
    episodes: int
    mean_return: float
    mean_shaped_return: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    wall_seconds: float

    def row(self):
        values = []
        for name in CURVE_COLUMNS:
            value = getattr(self, name)
            if isinstance(value, float) and not math.isfinite(value):
                values.append("N/A")
            else:
                values.append(format_number(value))
        return values


def train(cfg, tc, variant, seed, checkpoint_path=None, verbose=True):
    """
    Trains one policy. Returns (PolicyParams, [CurvePoint, ...]).

    On divergence the current parameters are written next to checkpoint_path
    (when given) before TrainingDivergedError propagates.
    """
    tc.validate()
    rng = np.random.default_rng(seed)
    params = init_policy(cfg, tc, variant, rng)
    optimizer_state = make_optimizer(params.parameters(), tc.learning_rate)
    curves = []
    steps = 0
    iteration = 0
    start = time.time()
    if verbose:
        print(f"Training {variant} on {cfg.name} (seed {seed}, {tc.total_steps:,} steps)")

    while steps < tc.total_steps:
        batch, episodes = collect_rollouts(params, cfg, tc, seed, iteration)
        compute_advantages(batch, cfg.gamma, tc.gae_lambda)
        try:
            _, diagnostics = ppo_update(params, batch, tc, optimizer_state, rng)
        except (TrainingDivergedError, FloatingPointError) as e:
            if checkpoint_path:
                diverged_path = f"{checkpoint_path}.diverged"
                save_policy(diverged_path, params, cfg)
                print(f"Error: Training diverged at iteration {iteration}: {e}")
                print(f"Checkpoint of the last parameters: {diverged_path}")
            if isinstance(e, FloatingPointError):
                raise TrainingDivergedError(str(e)) from e
            raise

        steps += len(batch)
        returns = [raw for raw, _ in episodes]
        shaped = [s for _, s in episodes]
        point = CurvePoint(
            iteration=iteration,
            steps=steps,
            episodes=len(episodes),
            mean_return=float(np.mean(returns)) if returns else float("nan"),
            mean_shaped_return=float(np.mean(shaped)) if shaped else float("nan"),
            policy_loss=diagnostics["policy_loss"],
            value_loss=diagnostics["value_loss"],
            entropy=diagnostics["entropy"],
            clip_fraction=diagnostics["clip_fraction"],
            wall_seconds=time.time() - start,
        )
        curves.append(point)
        if verbose:
            print(
                f"  iter {iteration:4d} | steps {steps:8d} | return {point.mean_return:9.4f} | "
                f"entropy {point.entropy:7.4f} | clip {point.clip_fraction:5.3f}"
            )
        iteration += 1

    if checkpoint_path:
        save_policy(checkpoint_path, params, cfg)
        if verbose:
            print(f"✓ Checkpoint saved: {checkpoint_path}")
    if verbose:
        print(f"✓ Training finished in {format_duration(time.time() - start)}")
    return params, curves


def write_curves(path, curves):
    return write_csv(path, CURVES_HEADER, CURVE_COLUMNS, [p.row() for p in curves])


def validate_curves_file(path):
    return check_csv_file(path, CURVES_HEADER, CURVE_COLUMNS, numeric_columns=CURVE_COLUMNS)


def episodes_to_converge(curves, tolerance=0.05):
    """
    Cumulative episodes until the mean return first comes within `tolerance`
    (relative) of the final mean return. None when no iteration finished an episode.
    """
    scored = [p for p in curves if math.isfinite(p.mean_return)]
    if not scored:
        return None
    final = scored[-1].mean_return
    episodes = 0
    for point in curves:
        episodes += point.episodes
        if math.isfinite(point.mean_return) and abs(point.mean_return - final) <= tolerance * abs(final):
            return episodes
    return episodes


def save_policy(path, params, cfg):
    metadata = {
        "variant": params.variant,
        "n_robots": params.n_robots,
        "n_adversaries": params.n_adversaries,
        "route_length": cfg.route_length,
        "v_max": params.v_max,
        "speed_set": list(params.speed_set),
        "encoding": params.encoding,
        "actor_layers": len(params.actor.weights),
        "critic_layers": len(params.critic.weights),
    }
    names = params.parameter_names()
    return save_arrays(path, list(zip(names, params.parameters())), metadata)


def load_policy(path, cfg):
    """Loads a checkpoint and checks it against the scenario's dimensions."""
    metadata, arrays = load_arrays(path)
    variant = metadata.get("variant")
    if variant not in VARIANTS:
        raise ValueError(f"Checkpoint {path} has unknown variant {variant!r}")
    if metadata.get("n_robots") != cfg.n_robots or metadata.get("n_adversaries") != cfg.n_adversaries:
        raise ValueError(
            f"Checkpoint {path} was trained for {metadata.get('n_robots')} robots and "
            f"{metadata.get('n_adversaries')} adversaries, scenario has {cfg.n_robots} and "
            f"{cfg.n_adversaries}"
        )
    actor_count = 2 * metadata["actor_layers"]
    critic_count = 2 * metadata["critic_layers"]
    if len(arrays) != actor_count + critic_count + 1:
        raise ValueError(f"Checkpoint {path} holds {len(arrays)} arrays, expected {actor_count + critic_count + 1}")
    values = [a for _, a in arrays]
    actor = DenseNet(values[0:actor_count:2], values[1:actor_count:2])
    critic = DenseNet(values[actor_count:actor_count + critic_count:2],
                      values[actor_count + 1:actor_count + critic_count:2])
    params = PolicyParams(
        variant=variant,
        actor=actor,
        critic=critic,
        log_spread=values[-1],
        speed_set=tuple(metadata["speed_set"]),
        n_robots=cfg.n_robots,
        n_adversaries=cfg.n_adversaries,
        v_max=float(metadata["v_max"]),
        encoding=metadata["encoding"],
    )
    expected_input = encoded_dim(cfg, params.encoding)
    if actor.input_dim != expected_input or critic.input_dim != expected_input:
        raise ValueError(
            f"Checkpoint {path} expects input dimension {actor.input_dim}, "
            f"scenario encodes to {expected_input}"
        )
    if actor.output_dim != cfg.n_robots * params.head_size or critic.output_dim != 1:
        raise ValueError(f"Checkpoint {path} has output dimensions that do not match the scenario")
    if params.log_spread.shape != (cfg.n_robots,):
        raise ValueError(f"Checkpoint {path} has a log_spread of shape {params.log_spread.shape}")
    return params


def policy_function(params, cfg, deterministic=True, rng=None):
    def act(state):
        encoded = encode_state(state, cfg, params.encoding)
        return sample_action(params, encoded, rng, deterministic)[0]

    return act


def evaluate_policy(params, cfg, placements, deterministic=True, relocation=None, seed=0):
    """Runs one episode per adversary placement and returns the StepRecords of each."""
    rng = np.random.default_rng(seed)
    act = policy_function(params, cfg, deterministic, rng)
    return [
        run_policy(act, cfg, initial_state(cfg, placement), relocation)
        for placement in placements
    ]


def main():
    parser = argparse.ArgumentParser(description="Train a PPO policy on a scenario")
    parser.add_argument("scenario", help="Preset name or scenario .cfg path")
    parser.add_argument("--variant", choices=VARIANTS, default=D_PPO)
    parser.add_argument("--config", help="Train config file (# route-guard train v1)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--checkpoint", default=None)
    args = parser.parse_args()

    try:
        cfg = resolve_scenario(args.scenario)
        tc = load_train_config(args.config) if args.config else TrainConfig().validate()
        train(cfg, tc, args.variant, args.seed, args.checkpoint)
    except (OSError, ValueError, TrainingDivergedError) as e:
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
