"""Minimal feed-forward network for the deep Q-learning agent.

Dense layers with ReLU hidden activations and an identity output layer of
width 2 (one Q value per action). Backprop is specialized to squared error on
a single selected output, which is all the agent ever needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MLP:
    sizes: list[int]
    weights: list[np.ndarray]  # per layer, shape (n_out, n_in)
    biases: list[np.ndarray]   # per layer, shape (n_out,)

    @classmethod
    def create(cls, sizes: list[int], rng) -> "MLP":
        """He-style uniform fan-in initialization; biases start at zero."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / n_in)
            weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(sizes=list(sizes), weights=weights, biases=biases)


def forward(net: MLP, x: np.ndarray) -> np.ndarray:
    """Forward pass; returns the output-layer vector (the 2 Q values)."""
    a = np.asarray(x, dtype=float)
    if a.shape != (net.sizes[0],):
        raise ValueError(f"input shape {a.shape} does not match input size {net.sizes[0]}")
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = w @ a + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a


def _forward_cached(net: MLP, x: np.ndarray):
    pre, post = [], [np.asarray(x, dtype=float)]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ post[-1] + b
        pre.append(z)
        post.append(np.maximum(z, 0.0) if i < last else z)
    return pre, post


def backward_mse_single(net: MLP, x: np.ndarray, action_index: int, target: float):
    """Gradients of (target - Q[action_index])^2 w.r.t. all parameters.

    Only the selected output receives error; the other output's direct path
    carries zero gradient. Returns (grad_weights, grad_biases, loss).
    """
    if action_index not in (0, 1):
        raise ValueError("action_index must be 0 or 1")
    pre, post = _forward_cached(net, x)
    out = post[-1]
    residual = out[action_index] - target
    loss = float(residual * residual)

    delta = np.zeros_like(out)
    delta[action_index] = 2.0 * residual
    grad_w = [np.empty(0)] * len(net.weights)
    grad_b = [np.empty(0)] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        grad_w[i] = np.outer(delta, post[i])
        grad_b[i] = delta.copy()
        if i > 0:
            delta = (net.weights[i].T @ delta) * (pre[i - 1] > 0.0)
    return grad_w, grad_b, loss


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: MLP, learning_rate: float = 1e-4) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def adam_step(net: MLP, adam: AdamState, grad_w, grad_b) -> None:
    """One bias-corrected Adam update, in place."""
    adam.step += 1
    t = adam.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for i in range(len(net.weights)):
        for params, grads, m, v in (
            (net.weights[i], grad_w[i], adam.m_w[i], adam.v_w[i]),
            (net.biases[i], grad_b[i], adam.m_b[i], adam.v_b[i]),
        ):
            if grads.shape != params.shape:
                raise ValueError("gradient shape does not match parameters")
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grads
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * grads * grads
            params -= adam.learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def copy_parameters(src: MLP, dst: MLP) -> MLP:
    """Deep-copy parameters from src into dst (architectures must match)."""
    if src.sizes != dst.sizes:
        raise ValueError(f"architecture mismatch: {src.sizes} vs {dst.sizes}")
    for i in range(len(src.weights)):
        dst.weights[i] = src.weights[i].copy()
        dst.biases[i] = src.biases[i].copy()
    return dst


def clone(net: MLP) -> MLP:
    return MLP(sizes=list(net.sizes), weights=[w.copy() for w in net.weights],
               biases=[b.copy() for b in net.biases])
