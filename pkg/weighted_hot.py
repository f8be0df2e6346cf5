#!/usr/bin/env python3
"""
Weighted-hot encoding of continuous route positions.

A position s on [0, L] becomes a vector of length ceil(L)+1 with weight
1-dec on index floor(s) and dec on index floor(s)+1, where dec is the
fractional part of s. Weights are computed in decimal arithmetic from the
shortest float text, so 3.2 encodes to exactly 0.8 and 0.2.
"""

import math
import sys
from decimal import Decimal

import numpy as np

WEIGHTED_HOT = "weighted_hot"
SCALAR = "scalar"
ENCODING_MODES = (WEIGHTED_HOT, SCALAR)


def block_size(route_length):
    return int(math.ceil(route_length)) + 1


def encode_scalar(s, route_length):
    if not math.isfinite(s):
        raise ValueError(f"Cannot encode non-finite position {s}")
    if s < 0 or s > route_length:
        raise ValueError(f"Position {s} outside [0, {route_length}]")
    h = np.zeros(block_size(route_length), dtype=float)
    exact = Decimal(repr(float(s)))
    whole = int(exact)
    dec = exact - whole
    h[whole] = float(1 - dec)
    if dec > 0:
        h[whole + 1] = float(dec)
    return h


def decode_block(h):
    return float(np.dot(np.arange(len(h)), h))


def encoded_dim(cfg, mode=WEIGHTED_HOT):
    if mode == SCALAR:
        return cfg.n_robots + cfg.n_adversaries
    if mode != WEIGHTED_HOT:
        raise ValueError(f"Unknown encoding mode '{mode}', expected one of {ENCODING_MODES}")
    return (cfg.n_robots + cfg.n_adversaries) * block_size(cfg.route_length)


def encode_state(state, cfg, mode=WEIGHTED_HOT):
    """
    Concatenates one block per robot position, then one per adversary position.

    The scalar mode keeps the raw positions divided by L and exists for
    comparing encodings during training.
    """
    values = tuple(state.positions) + tuple(state.adversary_positions)
    if len(values) != cfg.n_robots + cfg.n_adversaries:
        raise ValueError(
            f"State has {len(values)} positions, scenario expects "
            f"{cfg.n_robots + cfg.n_adversaries}"
        )
    if mode == SCALAR:
        for s in values:
            if not math.isfinite(s) or s < 0 or s > cfg.route_length:
                raise ValueError(f"Position {s} outside [0, {cfg.route_length}]")
        return np.array(values, dtype=float) / cfg.route_length
    if mode != WEIGHTED_HOT:
        raise ValueError(f"Unknown encoding mode '{mode}', expected one of {ENCODING_MODES}")
    return np.concatenate([encode_scalar(s, cfg.route_length) for s in values])


if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("Usage: python weighted_hot.py <position> <route_length>")
        sys.exit(1)
    try:
        print(encode_scalar(float(sys.argv[1]), float(sys.argv[2])))
    except ValueError as e:
        print(f"Error: {e}")
        sys.exit(1)
