#!/usr/bin/env python3
"""
Scenario types and the scenario file loader.

A scenario fixes the route, the team, the reward constants and the adversaries
(their placement supports and risk profiles). Scenario files use the
`key = value` format with a versioned first line:

    # route-guard scenario v1
    route_length = 70
    n_robots = 2
    adversary.1.position = 35
    adversary.1.support = 30..40
    adversary.1.peak = 6
"""

import math
import os
import re
import sys
from dataclasses import dataclass, field, replace

from common_utils import (
    SCENARIO_DIR,
    SCENARIO_HEADER,
    format_number,
    parse_number_set,
    read_key_value_file,
    write_key_value_file,
)

TRIANGULAR = "triangular"
PIECEWISE_LINEAR = "piecewise_linear"


@dataclass(frozen=True)
class RiskProfile:
    """Unit risk shape around an adversary, relative to its position z."""

    kind: str = TRIANGULAR
    peak: float = 6.0
    slope: float = 1.0
    breakpoints: tuple = ()  # ((offset, unit_risk), ...) for piecewise_linear

    def __post_init__(self):
        if self.kind == TRIANGULAR:
            if not self.peak > 0:
                raise ValueError(f"Triangular risk peak must be positive, got {self.peak}")
            if not self.slope > 0:
                raise ValueError(f"Triangular risk slope must be positive, got {self.slope}")
        elif self.kind == PIECEWISE_LINEAR:
            if len(self.breakpoints) < 2:
                raise ValueError("Piecewise-linear risk needs at least two breakpoints")
            offsets = [p[0] for p in self.breakpoints]
            if any(b <= a for a, b in zip(offsets, offsets[1:])):
                raise ValueError("Piecewise-linear breakpoint offsets must be strictly increasing")
            values = [p[1] for p in self.breakpoints]
            if any(v < 0 for v in values):
                raise ValueError("Piecewise-linear unit risk must be non-negative")
            if values[0] != 0 or values[-1] != 0:
                raise ValueError("Piecewise-linear unit risk must be zero at both ends")
            if not max(values) > 0:
                raise ValueError("Piecewise-linear unit risk must have a positive peak")
        else:
            raise ValueError(f"Unknown risk profile kind: {self.kind}")

    @property
    def max_risk(self):
        if self.kind == TRIANGULAR:
            return self.peak
        return max(p[1] for p in self.breakpoints)

    def extent(self):
        """(lowest, highest) offset from z where risk can be non-zero."""
        if self.kind == TRIANGULAR:
            half_width = self.peak / self.slope
            return (-half_width, half_width)
        return (self.breakpoints[0][0], self.breakpoints[-1][0])

    def knots(self):
        """Offsets where the profile changes slope."""
        if self.kind == TRIANGULAR:
            lo, hi = self.extent()
            return (lo, 0.0, hi)
        return tuple(p[0] for p in self.breakpoints)


@dataclass(frozen=True)
class AdversarySpec:
    position: float
    support: tuple
    beta: float = 0.6
    profile: RiskProfile = field(default_factory=RiskProfile)

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError(f"Guard strength beta must be in (0, 1), got {self.beta}")
        if not self.support:
            raise ValueError("Adversary placement support must not be empty")

    def zone(self, route_length, z=None):
        """Risk zone [lo, hi] for an adversary at z, clipped to the route."""
        z = self.position if z is None else z
        lo, hi = self.profile.extent()
        return (max(0.0, z + lo), min(float(route_length), z + hi))


@dataclass(frozen=True)
class ScenarioConfig:
    route_length: float = 70.0
    dt: float = 1.0
    n_robots: int = 2
    v_max: float = 3.0
    time_penalty: float = 1.0
    gamma: float = 0.995
    horizon: int = 100
    shaping_c: float = 0.1
    terminal_q: float = 5.0
    reward_scale: float = 10.0
    adversaries: tuple = ()
    name: str = "custom"

    def __post_init__(self):
        if not self.route_length > 0:
            raise ValueError(f"route_length must be positive, got {self.route_length}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_robots < 1:
            raise ValueError(f"n_robots must be at least 1, got {self.n_robots}")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.time_penalty < 0:
            raise ValueError(f"time_penalty must be non-negative, got {self.time_penalty}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if not self.reward_scale > 0:
            raise ValueError(f"reward_scale must be positive, got {self.reward_scale}")
        for j, adversary in enumerate(self.adversaries, start=1):
            for z in adversary.support:
                if not 0 < z < self.route_length:
                    raise ValueError(f"Adversary {j}: support value {z} is not strictly inside (0, {self.route_length})")
            if adversary.position not in adversary.support:
                raise ValueError(f"Adversary {j}: position {adversary.position} is not in its support")

    @property
    def n_adversaries(self):
        return len(self.adversaries)

    def zones(self, adversary_positions=None):
        if adversary_positions is None:
            adversary_positions = [adv.position for adv in self.adversaries]
        return [
            adv.zone(self.route_length, z)
            for adv, z in zip(self.adversaries, adversary_positions)
        ]


_ADVERSARY_KEY = re.compile(r"adversary\.(\d+)\.(\w+)")

_SCALAR_KEYS = {
    "name": str,
    "route_length": float,
    "dt": float,
    "n_robots": int,
    "v_max": float,
    "time_penalty": float,
    "gamma": float,
    "horizon": int,
    "shaping_c": float,
    "terminal_q": float,
    "reward_scale": float,
}

_ADVERSARY_FIELDS = ("position", "support", "beta", "kind", "peak", "slope", "breakpoints")


def _parse_breakpoints(text):
    points = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ValueError(f"Breakpoint '{part}' must look like 'offset:unit_risk'")
        offset, value = part.split(":", 1)
        points.append((float(offset), float(value)))
    return tuple(points)


def scenario_from_values(values):
    """Builds a ScenarioConfig from parsed `key = value` strings."""
    scalars = {}
    adversary_fields = {}
    default_beta = 0.6

    for key, raw in values.items():
        if key in _SCALAR_KEYS:
            try:
                scalars[key] = _SCALAR_KEYS[key](raw)
            except ValueError:
                raise ValueError(f"Invalid value for '{key}': '{raw}'")
            continue
        if key == "beta":
            default_beta = float(raw)
            continue
        match = _ADVERSARY_KEY.fullmatch(key)
        if match and match.group(2) in _ADVERSARY_FIELDS:
            adversary_fields.setdefault(int(match.group(1)), {})[match.group(2)] = raw
            continue
        raise ValueError(f"Unknown scenario key: '{key}'")

    indices = sorted(adversary_fields)
    if indices and indices != list(range(1, len(indices) + 1)):
        raise ValueError(f"Adversary indices must be 1..m without gaps, got {indices}")

    adversaries = []
    for j in indices:
        fields = adversary_fields[j]
        if "support" not in fields:
            raise ValueError(f"Adversary {j}: missing 'support'")
        support = parse_number_set(fields["support"])
        kind = fields.get("kind", TRIANGULAR)
        if kind == PIECEWISE_LINEAR:
            if "breakpoints" not in fields:
                raise ValueError(f"Adversary {j}: piecewise_linear profile needs 'breakpoints'")
            profile = RiskProfile(kind=kind, breakpoints=_parse_breakpoints(fields["breakpoints"]))
        else:
            profile = RiskProfile(
                kind=kind,
                peak=float(fields.get("peak", 6.0)),
                slope=float(fields.get("slope", 1.0)),
            )
        position = float(fields["position"]) if "position" in fields else support[len(support) // 2]
        adversaries.append(
            AdversarySpec(
                position=position,
                support=support,
                beta=float(fields.get("beta", default_beta)),
                profile=profile,
            )
        )

    return ScenarioConfig(adversaries=tuple(adversaries), **scalars)


def load_scenario(path):
    values = read_key_value_file(path, SCENARIO_HEADER)
    cfg = scenario_from_values(values)
    if "name" not in values:
        cfg = replace(cfg, name=os.path.splitext(os.path.basename(path))[0])
    return cfg


def resolve_scenario(name_or_path):
    """Accepts a preset name (m1, m1_small, m2, m3) or a path to a .cfg file."""
    if os.path.exists(name_or_path):
        return load_scenario(name_or_path)
    preset = os.path.join(SCENARIO_DIR, f"{name_or_path}.cfg")
    if os.path.exists(preset):
        return load_scenario(preset)
    available = sorted(
        os.path.splitext(f)[0] for f in os.listdir(SCENARIO_DIR) if f.endswith(".cfg")
    ) if os.path.isdir(SCENARIO_DIR) else []
    raise ValueError(
        f"Unknown scenario '{name_or_path}'. Use a .cfg path or one of: {', '.join(available)}"
    )


def save_scenario(cfg, path):
    items = [("name", cfg.name)]
    for key in _SCALAR_KEYS:
        if key == "name":
            continue
        value = getattr(cfg, key)
        items.append((key, format_number(value) if isinstance(value, float) else value))
    for j, adv in enumerate(cfg.adversaries, start=1):
        prefix = f"adversary.{j}"
        items.append((f"{prefix}.position", format_number(adv.position)))
        items.append((f"{prefix}.support", ", ".join(format_number(z) for z in adv.support)))
        items.append((f"{prefix}.beta", format_number(adv.beta)))
        items.append((f"{prefix}.kind", adv.profile.kind))
        if adv.profile.kind == PIECEWISE_LINEAR:
            points = ", ".join(
                f"{format_number(o)}:{format_number(v)}" for o, v in adv.profile.breakpoints
            )
            items.append((f"{prefix}.breakpoints", points))
        else:
            items.append((f"{prefix}.peak", format_number(adv.profile.peak)))
            items.append((f"{prefix}.slope", format_number(adv.profile.slope)))
    write_key_value_file(path, SCENARIO_HEADER, items)
    return path


def describe_scenario(cfg):
    lines = [
        f"Scenario: {cfg.name}",
        f"Route length: {format_number(cfg.route_length)}  dt: {format_number(cfg.dt)}  "
        f"horizon: {cfg.horizon}",
        f"Robots: {cfg.n_robots}  v_max: {format_number(cfg.v_max)}  "
        f"time penalty: {format_number(cfg.time_penalty)}",
    ]
    for j, (adv, zone) in enumerate(zip(cfg.adversaries, cfg.zones()), start=1):
        lines.append(
            f"Adversary {j}: z={format_number(adv.position)} "
            f"support=[{format_number(min(adv.support))}, {format_number(max(adv.support))}] "
            f"{adv.profile.kind} peak={format_number(adv.profile.max_risk)} "
            f"zone=[{format_number(zone[0])}, {format_number(zone[1])}] beta={format_number(adv.beta)}"
        )
    return "\n".join(lines)


def grid_compatible(cfg):
    """True when every reachable position stays on the integer grid 0..L."""
    return (
        float(cfg.route_length).is_integer()
        and math.isclose(cfg.dt, 1.0)
        and all(float(adv.position).is_integer() for adv in cfg.adversaries)
    )


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: python scenario_config.py <scenario name or .cfg path>")
        sys.exit(1)
    try:
        print(describe_scenario(resolve_scenario(sys.argv[1])))
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
