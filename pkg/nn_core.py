#!/usr/bin/env python3
"""
Small numpy neural-network core: reverse-mode autodiff on a tape, dense
networks, Adam and a binary checkpoint format.

Everything is float64. A GradientTape records array-valued operations in
forward order; backward() walks them in reverse and accumulates gradients
into the variables registered on the tape.
"""

import json
import struct
import sys
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"RGNN"
CHECKPOINT_VERSION = 1


def _unbroadcast(grad, shape):
    """Sums a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __array_ufunc__ = None

    def __init__(self, value, tape, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=float)
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"

    def _lift(self, other):
        if isinstance(other, Tensor):
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        other = self._lift(other)
        return self.tape.record(
            self.value + other.value,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return self.tape.record(
            self.value - other.value,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        return self.tape.record(
            self.value * other.value,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.value, self.shape),
                _unbroadcast(g * self.value, other.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return self.tape.record(
            self.value / other.value,
            (self, other),
            lambda g: (
                _unbroadcast(g / other.value, self.shape),
                _unbroadcast(-g * self.value / other.value ** 2, other.shape),
            ),
        )

    def __neg__(self):
        return self.tape.record(-self.value, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        other = self._lift(other)
        if self.value.ndim != 2 or other.value.ndim != 2:
            raise ValueError("matmul expects two 2-D operands")
        return self.tape.record(
            self.value @ other.value,
            (self, other),
            lambda g: (g @ other.value.T, self.value.T @ g),
        )

    def __getitem__(self, key):
        def backward(g):
            full = np.zeros_like(self.value)
            np.add.at(full, key, g)
            return (full,)

        return self.tape.record(self.value[key], (self,), backward)

    def tanh(self):
        y = np.tanh(self.value)
        return self.tape.record(y, (self,), lambda g: (g * (1.0 - y * y),))

    def exp(self):
        y = np.exp(self.value)
        return self.tape.record(y, (self,), lambda g: (g * y,))

    def log(self):
        return self.tape.record(np.log(self.value), (self,), lambda g: (g / self.value,))

    def square(self):
        return self.tape.record(self.value ** 2, (self,), lambda g: (2.0 * self.value * g,))

    def sum(self, axis=None, keepdims=False):
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape).copy(),)

        return self.tape.record(self.value.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def log_softmax(self, axis=-1):
        shifted = self.value - self.value.max(axis=axis, keepdims=True)
        y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

        def backward(g):
            return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

        return self.tape.record(y, (self,), backward)

    def clip(self, lo, hi):
        mask = (self.value >= lo) & (self.value <= hi)
        return self.tape.record(np.clip(self.value, lo, hi), (self,), lambda g: (g * mask,))

    def gather(self, indices):
        """Picks one entry per row along the last axis."""
        indices = np.asarray(indices, dtype=int)[..., None]

        def backward(g):
            full = np.zeros_like(self.value)
            np.put_along_axis(full, indices, g[..., None], axis=-1)
            return (full,)

        picked = np.take_along_axis(self.value, indices, axis=-1)[..., 0]
        return self.tape.record(picked, (self,), backward)

    def reshape(self, *shape):
        original = self.shape
        return self.tape.record(
            self.value.reshape(*shape), (self,), lambda g: (g.reshape(original),)
        )


def minimum(a, b):
    b = a._lift(b)
    take_a = a.value <= b.value
    return a.tape.record(
        np.minimum(a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


class GradientTape:
    """Records operations on Tensors for one forward/backward pass."""

    def __init__(self):
        self.nodes = []
        self.variables = []

    def constant(self, value):
        return Tensor(value, self)

    def variable(self, value, name=None):
        tensor = Tensor(value, self, requires_grad=True, name=name)
        self.nodes.append(tensor)
        self.variables.append(tensor)
        return tensor

    def record(self, value, parents, backward_fn):
        if not any(p.requires_grad for p in parents):
            return Tensor(value, self)
        tensor = Tensor(value, self, parents, backward_fn, requires_grad=True)
        self.nodes.append(tensor)
        return tensor

    def backward(self, loss):
        """Returns gradients for the tape's variables, in registration order."""
        if not self.nodes:
            raise RuntimeError("backward() called before any forward pass was recorded")
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise RuntimeError("Loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ValueError(f"Loss must be a scalar, got shape {loss.shape}")

        for variable in self.variables:
            variable.grad = None
        grads = {id(loss): np.ones_like(loss.value)} if loss.requires_grad else {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g
                continue
            for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
                if not parent.requires_grad or parent_grad is None:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

        return [
            v.grad if v.grad is not None else np.zeros_like(v.value) for v in self.variables
        ]


def backward(tape, loss):
    return tape.backward(loss)


# Dense networks

# Hidden-layer activations; the output layer is always linear.
ACTIVATIONS = ("tanh", "identity")


@dataclass
class DenseNet:
    weights: list
    biases: list
    hidden_activation: str = "tanh"

    def __post_init__(self):
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.hidden_activation}', expected one of {ACTIVATIONS}")

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def output_dim(self):
        return self.weights[-1].shape[1]

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def parameter_names(self, prefix="net"):
        names = []
        for layer in range(len(self.weights)):
            names.extend([f"{prefix}.layer{layer}.weight", f"{prefix}.layer{layer}.bias"])
        return names


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def make_dense_net(input_dim, hidden_sizes, output_dim, rng, output_gain=1.0,
                   hidden_gain=np.sqrt(2.0), hidden_activation="tanh"):
    if input_dim < 1 or output_dim < 1:
        raise ValueError(f"Network dimensions must be positive, got {input_dim} -> {output_dim}")
    if hidden_activation not in ACTIVATIONS:
        raise ValueError(f"Unknown activation '{hidden_activation}', expected one of {ACTIVATIONS}")
    sizes = [input_dim] + list(hidden_sizes) + [output_dim]
    weights = []
    biases = []
    for layer, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        gain = output_gain if layer == len(sizes) - 2 else hidden_gain
        weights.append(orthogonal((fan_in, fan_out), gain, rng))
        biases.append(np.zeros(fan_out))
    return DenseNet(weights, biases, hidden_activation)


def _check_input(net, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"Network expects input dimension {net.input_dim}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("Network input contains non-finite values")
    return x


def forward(net, x):
    """Plain numpy forward pass for a single input or a batch."""
    h = _check_input(net, x)
    last = len(net.weights) - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if layer < last and net.hidden_activation == "tanh":
            h = np.tanh(h)
    return h


def net_variables(tape, net, prefix="net"):
    return [
        tape.variable(p, name)
        for p, name in zip(net.parameters(), net.parameter_names(prefix))
    ]


def forward_on_tape(net, variables, x):
    """Recorded forward pass; `variables` come from net_variables on the same tape."""
    tape = variables[0].tape
    h = tape.constant(np.atleast_2d(_check_input(net, x)))
    last = len(net.weights) - 1
    for layer in range(len(net.weights)):
        h = h @ variables[2 * layer] + variables[2 * layer + 1]
        if layer < last and net.hidden_activation == "tanh":
            h = h.tanh()
    return h


# Adam


@dataclass
class OptimizerState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def make_optimizer(params, learning_rate=3e-4, beta1=0.9, beta2=0.999, eps=1e-5):
    return OptimizerState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def clip_by_global_norm(grads, max_norm):
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is None or max_norm <= 0 or total <= max_norm:
        return grads, total
    scale = max_norm / (total + 1e-12)
    return [g * scale for g in grads], total


def optimizer_step(state, params, grads, names=None):
    """Adam update with bias correction, applied to `params` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"Optimizer tracks {len(state.m)} parameters, got {len(params)} params "
            f"and {len(grads)} gradients"
        )
    for index, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"Gradient shape {g.shape} does not match parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            label = names[index] if names else f"#{index}"
            raise FloatingPointError(f"Non-finite gradient for parameter {label}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


# Checkpoints


def save_arrays(path, named_arrays, metadata=None):
    """
    Binary layout (little-endian):
    magic 'RGNN', uint16 version, uint32 array count, uint32 metadata length,
    metadata JSON, then per array: uint16 name length, name, uint8 ndim,
    uint32 dims, float64 values in row-major order.
    """
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<HII", CHECKPOINT_VERSION, len(named_arrays), len(meta)))
        f.write(meta)
        for name, array in named_arrays:
            array = np.ascontiguousarray(array, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(array.tobytes(order="C"))
    return path


def load_arrays(path):
    with open(path, "rb") as f:
        data = f.read()

    def take(offset, size):
        if offset + size > len(data):
            raise ValueError(f"Checkpoint {path} is truncated")
        return data[offset:offset + size], offset + size

    magic, offset = take(0, len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic bytes)")
    raw, offset = take(offset, struct.calcsize("<HII"))
    version, count, meta_length = struct.unpack("<HII", raw)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"Unsupported checkpoint version {version}")
    raw, offset = take(offset, meta_length)
    metadata = json.loads(raw.decode("utf-8"))

    arrays = []
    for _ in range(count):
        raw, offset = take(offset, 2)
        (name_length,) = struct.unpack("<H", raw)
        raw, offset = take(offset, name_length)
        name = raw.decode("utf-8")
        raw, offset = take(offset, 1)
        (ndim,) = struct.unpack("<B", raw)
        raw, offset = take(offset, 4 * ndim)
        shape = struct.unpack(f"<{ndim}I", raw)
        raw, offset = take(offset, 8 * int(np.prod(shape, dtype=np.int64)))
        arrays.append((name, np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)))
    if offset != len(data):
        raise ValueError(f"Checkpoint {path} has {len(data) - offset} trailing bytes")
    return metadata, arrays


def save_net(path, net, metadata=None):
    names = net.parameter_names()
    return save_arrays(path, list(zip(names, net.parameters())), metadata)


def load_net(path, input_dim=None, output_dim=None, hidden_activation="tanh"):
    """Loads a DenseNet written by save_net, checking dimensions when given."""
    metadata, arrays = load_arrays(path)
    if not arrays or len(arrays) % 2:
        raise ValueError(f"Checkpoint {path} does not hold weight/bias pairs")
    weights = [a for _, a in arrays[0::2]]
    biases = [a for _, a in arrays[1::2]]
    for layer, (w, b) in enumerate(zip(weights, biases)):
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError(f"Checkpoint {path}: layer {layer} has inconsistent shapes")
        if layer and weights[layer - 1].shape[1] != w.shape[0]:
            raise ValueError(f"Checkpoint {path}: layer {layer} does not chain to the previous layer")
    net = DenseNet(weights, biases, hidden_activation)
    if input_dim is not None and net.input_dim != input_dim:
        raise ValueError(f"Checkpoint input dimension {net.input_dim} does not match {input_dim}")
    if output_dim is not None and net.output_dim != output_dim:
        raise ValueError(f"Checkpoint output dimension {net.output_dim} does not match {output_dim}")
    return net, metadata


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: python nn_core.py <checkpoint>")
        sys.exit(1)
    try:
        metadata, arrays = load_arrays(sys.argv[1])
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        sys.exit(1)
    print(f"Metadata: {json.dumps(metadata, sort_keys=True)}")
    for name, array in arrays:
        print(f"- {name}: {array.shape}")
