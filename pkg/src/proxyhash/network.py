"""Small dense networks with hand-written backprop and plain SGD.

Every network here ends in a ``tanh`` layer of width ``k`` so its output is a
continuous relaxation of a hash code. Inputs are row-major batches
``(n, input_dim)``; 1-D inputs are treated as a batch of one and squeezed
back on the way out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, InvalidInputError

WEIGHTS_MAGIC = b"PXW1"
ACTIVATIONS = ("relu", "tanh")


@dataclass(eq=False)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError("bias length must match the weight matrix rows")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(eq=False)
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise DimensionError(f"layer dims do not chain: {prev.n_out} -> {nxt.n_in}")
        if self.layers[-1].activation != "tanh":
            raise ConfigError("the last layer must use tanh")

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def parameters(self):
        for layer in self.layers:
            yield layer.weights
            yield layer.bias


def xavier_init(n_in: int, n_out: int, rng: np.random.Generator, activation: str = "relu") -> DenseLayer:
    """Glorot-uniform weights on ``+-sqrt(6 / (n_in + n_out))`` and zero bias."""
    if n_in <= 0 or n_out <= 0:
        raise ConfigError(f"layer dimensions must be positive, got {n_in}x{n_out}")
    bound = np.sqrt(6.0 / (n_in + n_out))
    weights = rng.uniform(-bound, bound, size=(n_out, n_in))
    return DenseLayer(weights, np.zeros(n_out), activation)


def build_mlp(dims, rng: np.random.Generator) -> Mlp:
    """Chain of Xavier-initialised layers, relu between and tanh at the end.

    >>> net = build_mlp([10, 512, 32], np.random.default_rng(0))
    >>> [(l.n_in, l.n_out, l.activation) for l in net.layers]
    [(10, 512, 'relu'), (512, 32, 'tanh')]
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ConfigError("need at least input and output dimensions")
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        act = "tanh" if i == len(dims) - 2 else "relu"
        layers.append(xavier_init(a, b, rng, act))
    return Mlp(layers)


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"expected input width {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("network input contains non-finite values")
    return x, single


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Returns the activations of every layer, input first."""
    acts = [x]
    for layer in net.layers:
        z = acts[-1] @ layer.weights.T + layer.bias
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else np.tanh(z))
    return acts


def forward(net: Mlp, x) -> np.ndarray:
    x, single = _as_batch(net, x)
    out = _forward_cached(net, x)[-1]
    return out[0] if single else out


def backward(net: Mlp, x, upstream):
    """Reverse-mode gradients of ``sum(upstream * forward(net, x))``.

    Returns ``(grads, grad_input)`` where ``grads`` is a list of
    ``(d_weights, d_bias)`` per layer. The relu derivative at 0 is 0.
    """
    x, single = _as_batch(net, x)
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if upstream.shape != (x.shape[0], net.output_dim):
        raise DimensionError(f"upstream gradient shape {upstream.shape} != {(x.shape[0], net.output_dim)}")
    acts = _forward_cached(net, x)
    grads = [None] * len(net.layers)
    delta = upstream
    for i in range(len(net.layers) - 1, -1, -1):
        layer, out = net.layers[i], acts[i + 1]
        if layer.activation == "tanh":
            delta = delta * (1.0 - out * out)
        else:
            delta = delta * (out > 0)
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        delta = delta @ layer.weights
    return grads, (delta[0] if single else delta)


def sgd_step(net: Mlp, grads, lr: float) -> Mlp:
    """In-place ``theta <- theta - lr * grad``; returns ``net`` for chaining."""
    if len(grads) != len(net.layers):
        raise DimensionError("gradient list does not match the layer count")
    for layer, (dw, db) in zip(net.layers, grads):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise DimensionError("gradient shape does not match parameter shape")
        layer.weights -= lr * dw
        layer.bias -= lr * db
    return net


def save_checkpoint(path, net: Mlp) -> None:
    chunks = [WEIGHTS_MAGIC, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        chunks.append(struct.pack("<IIB", layer.n_in, layer.n_out, ACTIVATIONS.index(layer.activation)))
        chunks.append(layer.weights.astype("<f8").tobytes())
        chunks.append(layer.bias.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> Mlp:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != WEIGHTS_MAGIC or len(blob) < 8:
        raise FormatError(f"{path}: not a PXW1 checkpoint")
    (count,) = struct.unpack_from("<I", blob, 4)
    offset, layers = 8, []
    try:
        for _ in range(count):
            n_in, n_out, tag = struct.unpack_from("<IIB", blob, offset)
            offset += 9
            if tag >= len(ACTIVATIONS):
                raise FormatError(f"{path}: unknown activation tag {tag}")
            w = np.frombuffer(blob, "<f8", n_in * n_out, offset).reshape(n_out, n_in)
            offset += 8 * n_in * n_out
            b = np.frombuffer(blob, "<f8", n_out, offset)
            offset += 8 * n_out
            layers.append(DenseLayer(w.astype(np.float64), b.astype(np.float64), ACTIVATIONS[tag]))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    try:
        return Mlp(layers)
    except (ConfigError, DimensionError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
