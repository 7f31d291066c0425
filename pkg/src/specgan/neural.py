"""Fully connected networks with manual backprop, RMSprop, and a binary checkpoint format.

Batches are row-major: an input of shape ``(batch, in_dim)`` produces an
output of shape ``(batch, out_dim)``.
"""

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

LEAK = 0.2
ACTIVATIONS = ("identity", "relu", "tanh", "leaky_relu")


class FrozenNetworkError(RuntimeError):
    pass


class StaleCacheError(RuntimeError):
    pass


def _act(name, z):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAK * z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, a, grad):
    if name == "identity":
        return grad
    if name == "relu":
        return grad * (z > 0)
    if name == "tanh":
        return grad * (1.0 - a * a)
    if name == "leaky_relu":
        return grad * np.where(z > 0, 1.0, LEAK)
    raise ValueError(f"unknown activation {name!r}")


class DenseLayer:
    def __init__(self, weights, bias, activation="identity"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = np.array(weights, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        self.activation = activation
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (out, in) and bias (out,)")

    @classmethod
    def init(cls, in_dim, out_dim, activation, rng):
        # He-uniform for rectifiers, Glorot-uniform otherwise
        if activation in ("relu", "leaky_relu"):
            limit = np.sqrt(6.0 / in_dim)
        else:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-limit, limit, size=(out_dim, in_dim)), np.zeros(out_dim), activation)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def copy(self):
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class ForwardCache:
    inputs: list
    pre: list
    post: list
    version: int


class MLP:
    """A stack of dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        self.frozen = False
        self._version = 0

    @classmethod
    def build(cls, sizes, activations, rng):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        return cls([DenseLayer.init(i, o, a, rng) for i, o, a in zip(sizes[:-1], sizes[1:], activations)])

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def params(self):
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def num_params(self):
        return sum(p.size for p in self.params())

    def copy(self):
        net = MLP([layer.copy() for layer in self.layers])
        net.frozen = self.frozen
        return net

    def freeze(self):
        self.frozen = True
        return self

    def mark_updated(self):
        self._version += 1

    def forward(self, x):
        """Returns ``(output, cache)``; the cache feeds :meth:`backward`."""
        a = np.asarray(x, dtype=np.float64)
        if a.shape[-1] != self.in_dim:
            raise ValueError(f"input has {a.shape[-1]} features, network expects {self.in_dim}")
        inputs, pre, post = [], [], []
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weights.T + layer.bias
            a = _act(layer.activation, z)
            pre.append(z)
            post.append(a)
        return a, ForwardCache(inputs, pre, post, self._version)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_output):
        """Gradients for every parameter (same order as :meth:`params`) and for the input."""
        if cache.version != self._version:
            raise StaleCacheError("parameters changed since the forward pass")
        grads = [None] * (2 * len(self.layers))
        g = np.asarray(grad_output, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g = _act_grad(layer.activation, cache.pre[i], cache.post[i], g)
            x = cache.inputs[i]
            if g.ndim == 1:
                grads[2 * i] = np.outer(g, x)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = g.T @ x
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ layer.weights
        return grads, g


@dataclass
class RmspropState:
    learning_rate: float
    rho: float = 0.9
    eps: float = 1e-7
    momentum: float = 0.0
    accumulators: list = field(default=None)
    skipped: int = 0

    def __post_init__(self):
        if self.momentum != 0.0:
            raise ValueError("only momentum = 0 is supported")
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")


def rmsprop_step(state, params, grads, net=None):
    """In-place RMSprop update; returns False when a non-finite gradient skipped the step.

    ``acc <- rho acc + (1 - rho) g^2`` then ``p <- p - lr g / sqrt(acc + eps)``.
    """
    if net is not None and net.frozen:
        raise FrozenNetworkError("cannot update a frozen network")
    if state.accumulators is None:
        state.accumulators = [np.zeros_like(p) for p in params]
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        log.warning("rmsprop: non-finite gradient, step skipped")
        return False
    for p, g, acc in zip(params, grads, state.accumulators):
        tmp = np.multiply(g, g)
        tmp *= 1.0 - state.rho
        acc *= state.rho
        acc += tmp
        np.add(acc, state.eps, out=tmp)
        np.sqrt(tmp, out=tmp)
        np.divide(g, tmp, out=tmp)
        tmp *= state.learning_rate
        p -= tmp
    if net is not None:
        net.mark_updated()
    return True


# -- checkpoint format --------------------------------------------------------

_MAGIC = b"NNW1"
_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_mlp(net, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(net.layers)))
        for layer in net.layers:
            fh.write(struct.pack("<IIB", layer.out_dim, layer.in_dim, _TAGS[layer.activation]))
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an NNW1 checkpoint")
    (count,) = struct.unpack_from("<I", raw, 4)
    pos = 8
    layers = []
    for _ in range(count):
        out_dim, in_dim, tag = struct.unpack_from("<IIB", raw, pos)
        pos += 9
        w = np.frombuffer(raw, dtype="<f8", count=out_dim * in_dim, offset=pos).reshape(out_dim, in_dim)
        pos += 8 * out_dim * in_dim
        b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=pos)
        pos += 8 * out_dim
        layers.append(DenseLayer(w, b, ACTIVATIONS[tag]))
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MLP(layers)
