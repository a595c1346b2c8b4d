"""Plain-numpy multilayer perceptrons with reverse-mode gradients.

Networks are lists of dense layers with per-layer activation tags
("tanh", "relu" or "linear"). Forward passes return a cache of layer
outputs from which ``mlp_backward`` produces exact gradients for every
weight and bias; ``mlp_input_grad`` propagates only to the input, which is
what the actor update needs from the critic. Training networks run in
float32; gradient-check tests build float64 nets through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoForwardCacheError, ShapeError

ACTIVATIONS = ("tanh", "relu", "linear")


@dataclass
class MlpParams:
    weights: list        # per layer, shape (fan_in, fan_out)
    biases: list         # per layer, shape (fan_out,)
    activations: list    # per layer tag

    @property
    def dtype(self):
        return self.weights[0].dtype

    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list:
        """Flat list [W0, b0, W1, b1, ...] in declared order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         list(self.activations))


def _orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float):
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # make the factorization unique
    if fan_in < fan_out:
        q = q.T
    return gain * q[:fan_in, :fan_out]


def mlp_init(widths, activations, rng: np.random.Generator,
             dtype=np.float32, head_scale: float = 1e-3) -> MlpParams:
    """Orthogonal trunk layers, small-uniform final layer, zero biases."""
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    weights, biases = [], []
    last = len(widths) - 2
    for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        if i == last:
            w = rng.uniform(-head_scale, head_scale, size=(fi, fo))
        else:
            gain = np.sqrt(2.0) if activations[i] == "relu" else 1.0
            w = _orthogonal(rng, fi, fo, gain)
        weights.append(np.ascontiguousarray(w, dtype=dtype))
        biases.append(np.zeros(fo, dtype=dtype))
    return MlpParams(weights, biases, list(activations))


def _apply_act(z: np.ndarray, act: str) -> np.ndarray:
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0.0)
    return z


def mlp_forward(net: MlpParams, x: np.ndarray):
    """Batched forward pass.

    Args:
        x: (B, fan_in) or (fan_in,) input.
    Returns:
        (y, cache): output of the last layer and the cache for backward.
    """
    x = np.asarray(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.weights[0].shape[0]:
        raise ShapeError(f"input width {x.shape[1]} != {net.weights[0].shape[0]}")
    x = x.astype(net.dtype, copy=False)
    outs = [x]
    for w, b, act in zip(net.weights, net.biases, net.activations):
        x = _apply_act(x @ w + b, act)
        outs.append(x)
    y = outs[-1][0] if squeeze else outs[-1]
    return y, outs


def _check_cache(net: MlpParams, cache, dy: np.ndarray):
    if cache is None or len(cache) != len(net.weights) + 1:
        raise NoForwardCacheError("backward requires the matching forward cache")
    if dy.shape != cache[-1].shape:
        raise NoForwardCacheError(
            f"upstream gradient shape {dy.shape} != output shape {cache[-1].shape}")


def _act_backward(delta: np.ndarray, y: np.ndarray, act: str) -> np.ndarray:
    if act == "tanh":
        return delta * (1.0 - y * y)
    if act == "relu":
        return delta * (y > 0)
    return delta


def mlp_backward(net: MlpParams, cache, dy: np.ndarray):
    """Exact gradients of sum(dy * y) w.r.t. every weight and bias.

    Returns:
        (grads, dx): grads is a flat list matching ``parameters()`` order.
    """
    dy = np.asarray(dy, dtype=net.dtype)
    if dy.ndim == 1:
        dy = dy[None, :]
    _check_cache(net, cache, dy)
    grads = [None] * (2 * len(net.weights))
    delta = dy
    for l in range(len(net.weights) - 1, -1, -1):
        delta = _act_backward(delta, cache[l + 1], net.activations[l])
        grads[2 * l] = cache[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ net.weights[l].T
    dx = delta @ net.weights[0].T
    return grads, dx


def mlp_input_grad(net: MlpParams, cache, dy: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input only (no parameter gradients computed)."""
    dy = np.asarray(dy, dtype=net.dtype)
    if dy.ndim == 1:
        dy = dy[None, :]
    _check_cache(net, cache, dy)
    delta = dy
    for l in range(len(net.weights) - 1, -1, -1):
        delta = _act_backward(delta, cache[l + 1], net.activations[l])
        delta = delta @ net.weights[l].T
    return delta


class Adam:
    """Standard Adam with bias correction; state per parameter array."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> None:
    """target <- tau*online + (1-tau)*target, elementwise."""
    for pt, po in zip(target.parameters(), online.parameters()):
        pt *= (1.0 - tau)
        pt += tau * po
