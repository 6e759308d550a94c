"""Sampling distributions, importance weights and minibatch assembly.

Three priority transforms are supported:

``uniform``  every stored transition has the same mass,
``per``      mass ``p**alpha``,
``lap``      mass ``max(p**alpha, 1)`` (priority clipping).

The prioritized (PS) arm draws from the sum-tree with stratified masses, the
random-uniform (RUS) arm draws from the mirror store.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, WarmupIncomplete
from .transition_store import PrioritizedStore, StorePair

MODES = ("uniform", "per", "lap")
ARMS = ("PS", "RUS")


@dataclass(frozen=True)
class SamplingPolicy:
    mode: str = "per"
    alpha: float = 0.6
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown sampling mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")

    def transform(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if self.mode == "uniform":
            return np.ones_like(p)
        scaled = p**self.alpha
        if self.mode == "lap":
            return np.maximum(scaled, 1.0)
        return scaled


def transform_priority(policy: SamplingPolicy, p: float) -> float:
    if p < 0:
        raise ValueError(f"priority must be nonnegative, got {p}")
    return float(policy.transform(np.array([p]))[0])


def probability_of(policy: SamplingPolicy, store: PrioritizedStore) -> np.ndarray:
    """Sampling probability of every stored transition."""
    if store.count == 0:
        raise ValueError("probability of an empty store is undefined")
    mass = policy.transform(store.priorities[: store.count])
    return mass / mass.sum()


def raw_importance_weights(probabilities, beta: float, n: int) -> np.ndarray:
    """Unnormalised weights ``(1 / (n * P(i))) ** beta``."""
    return (1.0 / (n * np.asarray(probabilities, dtype=np.float64))) ** beta


def importance_weights(
    probabilities,
    indices=None,
    beta: float = 1.0,
    n: Optional[int] = None,
    min_probability: Optional[float] = None,
) -> np.ndarray:
    """Normalised importance weights for the entries at ``indices``.

    ``probabilities`` is the distribution over the whole store. The
    normaliser is the largest weight in the store, i.e. the weight of the
    least likely entry, so every returned value lies in (0, 1]. When only the
    batch probabilities are at hand, pass ``indices=None`` together with the
    store-wide ``min_probability``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if n is None:
        n = probabilities.size
    if min_probability is None:
        min_probability = float(probabilities.min())
    batch = probabilities if indices is None else probabilities[np.asarray(indices)]
    if beta == 0.0:
        return np.ones_like(batch)
    weights = raw_importance_weights(batch, beta, n)
    return weights / raw_importance_weights(min_probability, beta, n)


@dataclass
class Minibatch:
    arm: str
    indices: np.ndarray
    stamps: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    discounts: np.ndarray
    next_states: np.ndarray
    priorities: np.ndarray
    probabilities: np.ndarray
    min_probability: float
    count: int
    weights: np.ndarray = field(default=None)
    td_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(len(self.indices))

    @property
    def size(self) -> int:
        return len(self.indices)

    def state_actions(self, n_actions: int) -> np.ndarray:
        """Rows ``[state, one_hot(action)]`` for the similarity scorer."""
        onehot = np.zeros((self.size, n_actions))
        onehot[np.arange(self.size), self.actions] = 1.0
        return np.hstack([self.states, onehot])

    def apply_beta(self, beta: float) -> np.ndarray:
        self.weights = importance_weights(
            self.probabilities, None, beta, self.count, self.min_probability
        )
        return self.weights


def _gather(store, arm, idx, priorities, probabilities, min_probability) -> Minibatch:
    return Minibatch(
        arm=arm,
        indices=idx,
        stamps=store.stamps[idx].copy(),
        states=store.states[idx],
        actions=store.actions[idx],
        rewards=store.rewards[idx],
        discounts=store.discounts[idx],
        next_states=store.next_states[idx],
        priorities=priorities,
        probabilities=probabilities,
        min_probability=min_probability,
        count=store.count,
    )


def draw_minibatch(
    policy: SamplingPolicy,
    pair: StorePair,
    m: int,
    arm: str,
    rng: np.random.Generator,
) -> Minibatch:
    """Draw ``m`` transitions (duplicates allowed) from one sampling arm.

    The store's leaf transform must already be ``policy.transform``; the
    agent wires this up once when the store is built.
    """
    store = pair.prioritized
    n = store.count
    if n < m:
        raise WarmupIncomplete(f"warm-up not complete: {n} stored, minibatch needs {m}")
    if arm == "PS":
        u = (np.arange(m) + rng.random(m)) / m
        idx = store.sample_mass(u)
        total = store.total
        probabilities = store.tree.leaf(idx) / total
        min_probability = float(store.tree.leaves(n).min()) / total
    elif arm == "RUS":
        idx = pair.mirror.sample_uniform_index(rng.random(m))
        probabilities = np.full(m, 1.0 / n)
        min_probability = 1.0 / n
        store = pair.mirror
    else:
        raise ValueError(f"unknown sampling arm {arm!r}; expected one of {ARMS}")
    priorities = pair.prioritized.priorities[idx].copy()
    return _gather(store, arm, idx, priorities, probabilities, min_probability)
