"""A small dense ReLU network with hand-written backprop and an Adam optimizer.

All parameters live in one flat float64 vector; per-layer weights and biases
are views into it, so the optimizer and target-network copies work on a
single array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, TrainingDiverged

LOSS_KINDS = ("mse", "huber")


class DenseNet:
    """Feed-forward net: ReLU on hidden layers, identity on the output.

    Parameters
    ----------
    layer_sizes:
        ``[input, hidden..., output]``.
    rng:
        Generator for the uniform ``+-1/sqrt(fan_in)`` initialisation. When
        omitted all parameters start at zero.
    """

    def __init__(self, layer_sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {list(layer_sizes)}")
        self.layer_sizes = [int(n) for n in layer_sizes]
        shapes = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        self.n_params = sum(i * o + o for i, o in shapes)
        self.flat = np.zeros(self.n_params)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        offset = 0
        for fan_in, fan_out in shapes:
            w = self.flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.flat[offset : offset + fan_out]
            offset += fan_out
            if rng is not None:
                bound = 1.0 / np.sqrt(fan_in)
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "DenseNet":
        clone = DenseNet(self.layer_sizes)
        clone.flat[:] = self.flat
        return clone

    def load_from(self, other: "DenseNet") -> None:
        self.flat[:] = other.flat

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"input dimension {x.shape[-1]} does not match network input {self.input_dim}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        h = x
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer < last:
                h = np.maximum(h, 0.0)
        return h

    def forward_with_cache(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Forward pass over a 2-D batch, keeping every layer input."""
        h = np.atleast_2d(self._check_input(x))
        inputs = []
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if layer < last:
                h = np.maximum(h, 0.0)
        return h, inputs

    def backprop(self, inputs: List[np.ndarray], grad_out: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(grad_out * output)`` w.r.t. the flat parameters."""
        grad = np.empty_like(self.flat)
        offset = self.n_params
        g = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            w = self.weights[layer]
            h = inputs[layer]
            fan_in, fan_out = w.shape
            offset -= fan_out
            grad[offset : offset + fan_out] = g.sum(axis=0)
            offset -= fan_in * fan_out
            grad[offset : offset + fan_in * fan_out] = (h.T @ g).reshape(-1)
            if layer > 0:
                # h is the post-ReLU activation; its derivative at 0 is taken as 0
                g = (g @ w.T) * (h > 0.0)
        return grad


def mse_loss(delta):
    """``0.5 * delta**2`` and its derivative."""
    delta = np.asarray(delta, dtype=np.float64)
    return 0.5 * delta * delta, delta


def huber_loss(delta):
    """Quadratic for ``|delta| <= 1``, absolute value beyond; with derivative."""
    delta = np.asarray(delta, dtype=np.float64)
    absd = np.abs(delta)
    quad = absd <= 1.0
    loss = np.where(quad, 0.5 * delta * delta, absd)
    return loss, np.clip(delta, -1.0, 1.0)


def weighted_batch_loss(weights, deltas, loss_kind: str = "mse"):
    """Mean of ``w_i * L(delta_i)`` and its gradient w.r.t. each ``delta_i``."""
    weights = np.asarray(weights, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if weights.shape != deltas.shape:
        raise ValueError(f"weights and deltas differ in shape: {weights.shape} vs {deltas.shape}")
    if loss_kind == "mse":
        loss, dloss = mse_loss(deltas)
    elif loss_kind == "huber":
        loss, dloss = huber_loss(deltas)
    else:
        raise ConfigurationError(f"unknown loss kind {loss_kind!r}; expected one of {LOSS_KINDS}")
    n = deltas.size
    return float(np.sum(weights * loss) / n), weights * dloss / n


def backward(net: DenseNet, states, actions, targets, weights=None, loss_kind: str = "mse"):
    """Loss and exact parameter gradient for a batch of ``(s, a, target)``.

    The TD error is ``delta = target - Q(s, a)`` with the target held fixed.
    Returns ``(loss, flat_gradient, deltas)``.
    """
    q, inputs = net.forward_with_cache(states)
    rows = np.arange(q.shape[0])
    actions = np.asarray(actions, dtype=np.int64)
    deltas = np.asarray(targets, dtype=np.float64) - q[rows, actions]
    if weights is None:
        weights = np.ones_like(deltas)
    loss, dloss_ddelta = weighted_batch_loss(weights, deltas, loss_kind)
    grad_q = np.zeros_like(q)
    grad_q[rows, actions] = -dloss_ddelta
    return loss, net.backprop(inputs, grad_q), deltas


@dataclass
class OptimizerState:
    """Adam moments and hyperparameters."""

    n_params: int
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    timestep: int = 0
    first: np.ndarray = field(default=None)
    second: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.first is None:
            self.first = np.zeros(self.n_params)
        if self.second is None:
            self.second = np.zeros(self.n_params)


def optimizer_step(net: DenseNet, grads: np.ndarray, opt: OptimizerState) -> None:
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise TrainingDiverged(
            f"{bad} non-finite gradient entries at optimizer step {opt.timestep + 1}; "
            f"parameter norm {np.linalg.norm(net.flat):.6g}"
        )
    opt.timestep += 1
    opt.first *= opt.beta1
    opt.first += (1.0 - opt.beta1) * grads
    opt.second *= opt.beta2
    opt.second += (1.0 - opt.beta2) * grads * grads
    m_hat = opt.first / (1.0 - opt.beta1**opt.timestep)
    v_hat = opt.second / (1.0 - opt.beta2**opt.timestep)
    net.flat -= opt.step_size * m_hat / (np.sqrt(v_hat) + opt.eps)
