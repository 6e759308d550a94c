"""Replay storage: the prioritized buffer, its uniform mirror, and the sum-tree.

The prioritized store keeps the raw priority ``p_i`` of every transition and a
sum-tree over *transformed* priorities (``p**alpha``, clipped values, ...). The
transform is injected by the sampling layer so the store itself knows nothing
about alpha or clipping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, StaleIndexError

PriorityTransform = Callable[[np.ndarray], np.ndarray]


@dataclass
class Transition:
    """One ``(s, a, r, gamma-flag, s')`` tuple.

    ``discount_active`` is False on terminal transitions (the bootstrap term is
    dropped). ``episode`` tags the episode the transition came from so priority
    propagation can stop at episode boundaries.
    """

    state: np.ndarray
    action: int
    reward: float
    discount_active: bool
    next_state: np.ndarray
    priority: float = 1.0
    episode: int = 0


def _next_power_of_two(n: int) -> int:
    return 1 << (n - 1).bit_length()


class SumTree:
    """Complete binary tree of partial sums in a flat array.

    The array has ``2 * size - 1`` slots with the root at 0 and leaves starting
    at ``size - 1``; ``size`` is the requested capacity rounded up to a power of
    two. Unused leaves hold 0.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("sum-tree capacity must be positive")
        self.size = _next_power_of_two(capacity)
        self.nodes = np.zeros(2 * self.size - 1, dtype=np.float64)
        self._depth = self.size.bit_length() - 1

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def leaf(self, slot):
        return self.nodes[self.size - 1 + np.asarray(slot)]

    def leaves(self, count: Optional[int] = None) -> np.ndarray:
        start = self.size - 1
        stop = start + (self.size if count is None else count)
        return self.nodes[start:stop]

    def set(self, slot: int, value: float) -> None:
        node = self.size - 1 + slot
        nodes = self.nodes
        nodes[node] = value
        while node > 0:
            node = (node - 1) >> 1
            nodes[node] = nodes[2 * node + 1] + nodes[2 * node + 2]

    def set_many(self, slots: np.ndarray, values: np.ndarray) -> None:
        """Write several leaves, then refresh the internal nodes.

        With duplicate slots the last write wins, as with repeated ``set``.
        """
        slots = np.asarray(slots, dtype=np.int64)
        if slots.size == 0:
            return
        if slots.size <= 2:
            for slot, value in zip(slots.tolist(), np.broadcast_to(values, slots.shape).tolist()):
                self.set(slot, value)
            return
        self.nodes[slots + (self.size - 1)] = values
        # a full level-by-level pass over strided views is cheaper in numpy
        # than gathering the sparse set of ancestors
        self.rebuild()

    def rebuild(self) -> None:
        nodes = self.nodes
        for level in range(self._depth - 1, -1, -1):
            lo = (1 << level) - 1
            hi = (1 << (level + 1)) - 1
            np.add(nodes[2 * lo + 1 : 2 * hi + 1 : 2], nodes[2 * lo + 2 : 2 * hi + 2 : 2], out=nodes[lo:hi])

    def find(self, mass, count: Optional[int] = None):
        """Leaf slot whose cumulative interval contains ``mass``.

        Accepts a scalar or an array of masses. Occupied leaves are always the
        prefix ``[0, count)``; a mass that rounding pushes past the occupied
        total is assigned to the last occupied leaf.
        """
        scalar = np.ndim(mass) == 0
        mass = np.atleast_1d(np.asarray(mass, dtype=np.float64)).copy()
        nodes = self.nodes
        node = np.zeros(mass.shape, dtype=np.int64)
        for _ in range(self._depth):
            left = 2 * node + 1
            left_sum = nodes[left]
            go_right = mass >= left_sum
            mass -= left_sum * go_right
            node = left + go_right
        slots = node - (self.size - 1)
        if count is not None:
            np.minimum(slots, count - 1, out=slots)
        return int(slots[0]) if scalar else slots


class _Ring:
    """Fixed-capacity ring of transitions held column-wise."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ConfigurationError(f"capacity must be positive, got {capacity}")
        if obs_dim < 1:
            raise ConfigurationError(f"observation size must be positive, got {obs_dim}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.discounts = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.episodes = np.zeros(capacity, dtype=np.int64)
        # push serial of the transition currently in each slot
        self.stamps = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.count = 0
        self.pushes = 0

    def __len__(self) -> int:
        return self.count

    @property
    def oldest(self) -> int:
        return self.cursor if self.count == self.capacity else 0

    def _write(self, t: Transition) -> int:
        state = np.asarray(t.state, dtype=np.float64).reshape(-1)
        next_state = np.asarray(t.next_state, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.obs_dim or next_state.shape[0] != self.obs_dim:
            raise ConfigurationError(
                f"transition dimension {state.shape[0]}/{next_state.shape[0]} "
                f"does not match observation size {self.obs_dim}"
            )
        slot = self.cursor
        self.states[slot] = state
        self.actions[slot] = int(t.action)
        self.rewards[slot] = float(t.reward)
        self.discounts[slot] = 1.0 if t.discount_active else 0.0
        self.next_states[slot] = next_state
        self.episodes[slot] = int(t.episode)
        self.stamps[slot] = self.pushes
        self.pushes += 1
        self.cursor = (slot + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        return slot

    def transition(self, slot: int) -> Transition:
        return Transition(
            state=self.states[slot].copy(),
            action=int(self.actions[slot]),
            reward=float(self.rewards[slot]),
            discount_active=bool(self.discounts[slot]),
            next_state=self.next_states[slot].copy(),
            episode=int(self.episodes[slot]),
        )

    def steps_back(self, slot: int) -> int:
        """Number of live transitions inserted before ``slot``."""
        return (slot - self.oldest) % self.capacity

    def check_slot(self, slot: int, stamp: Optional[int] = None) -> None:
        if not 0 <= slot < self.count:
            raise StaleIndexError(f"slot {slot} is not occupied (count={self.count})")
        if stamp is not None and self.stamps[slot] != stamp:
            raise StaleIndexError(f"slot {slot} was overwritten since it was sampled")


class MirrorStore(_Ring):
    """Uniform-sampling twin of the prioritized store (no priorities)."""

    def push(self, t: Transition) -> int:
        return self._write(t)

    def sample_uniform_index(self, u):
        """``floor(u * count)`` for scalar or array ``u`` in [0, 1)."""
        if self.count == 0:
            raise IndexError("cannot sample from an empty mirror store")
        idx = np.floor(np.asarray(u, dtype=np.float64) * self.count).astype(np.int64)
        # u may round up to count when u is within one ulp of 1
        idx = np.minimum(idx, self.count - 1)
        return int(idx) if idx.ndim == 0 else idx


def identity_transform(p: np.ndarray) -> np.ndarray:
    return np.asarray(p, dtype=np.float64)


class PrioritizedStore(_Ring):
    """Ring buffer with a sum-tree over transformed priorities.

    Parameters
    ----------
    capacity:
        Maximum number of transitions ``N``.
    obs_dim:
        Observation size; pushes of any other size are rejected.
    epsilon:
        Priority floor applied on every priority assignment.
    transform:
        Vectorised map from raw priorities to tree leaves.
    """

    def __init__(
        self,
        capacity: int,
        obs_dim: int,
        epsilon: float = 1e-6,
        transform: PriorityTransform = identity_transform,
    ):
        super().__init__(capacity, obs_dim)
        if not epsilon > 0:
            raise ConfigurationError(f"priority floor must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.transform = transform
        self.priorities = np.zeros(capacity)
        self.tree = SumTree(capacity)

    def set_transform(self, transform: PriorityTransform) -> None:
        self.transform = transform
        n = self.count
        if n:
            self.tree.leaves(n)[:] = transform(self.priorities[:n])
            self.tree.rebuild()

    @property
    def total(self) -> float:
        return self.tree.total

    def max_priority(self) -> float:
        return float(self.priorities[: self.count].max()) if self.count else 1.0

    def push(self, t: Transition) -> int:
        priority = max(self.max_priority(), self.epsilon)
        slot = self._write(t)
        self.priorities[slot] = priority
        self.tree.set(slot, float(self.transform(np.array([priority]))[0]))
        return slot

    def update_priority(self, index: int, new_p: float, stamp: Optional[int] = None) -> None:
        self.check_slot(index, stamp)
        p = max(float(new_p), self.epsilon)
        self.priorities[index] = p
        self.tree.set(index, float(self.transform(np.array([p]))[0]))

    def update_priorities(self, indices, new_ps, stamps=None) -> None:
        """Batched ``update_priority``; later duplicates win."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            return
        if indices.min() < 0 or indices.max() >= self.count:
            raise StaleIndexError(f"slot out of occupied range (count={self.count})")
        if stamps is not None and np.any(self.stamps[indices] != np.asarray(stamps)):
            raise StaleIndexError("a sampled slot was overwritten before its priority update")
        p = np.maximum(np.asarray(new_ps, dtype=np.float64), self.epsilon)
        self.priorities[indices] = p
        self.tree.set_many(indices, self.transform(p))

    def refresh_leaves(self, slots) -> None:
        """Re-derive tree leaves for ``slots`` from the raw priority array."""
        slots = np.asarray(slots, dtype=np.int64)
        self.tree.set_many(slots, self.transform(self.priorities[slots]))

    def sample_mass(self, u):
        """Slot(s) whose cumulative transformed-priority interval holds ``u * total``."""
        total = self.tree.total
        assert self.count > 0 and total > 0.0, "sampling from an empty or zero-mass store"
        return self.tree.find(np.asarray(u, dtype=np.float64) * total, self.count)


class StorePair:
    """The prioritized buffer and its mirror, always pushed together."""

    def __init__(
        self,
        capacity: int,
        obs_dim: int,
        epsilon: float = 1e-6,
        transform: PriorityTransform = identity_transform,
    ):
        self.prioritized = PrioritizedStore(capacity, obs_dim, epsilon, transform)
        self.mirror = MirrorStore(capacity, obs_dim)

    def __len__(self) -> int:
        return self.prioritized.count

    def push(self, t: Transition) -> int:
        slot = self.prioritized.push(t)
        mirror_slot = self.mirror.push(t)
        assert slot == mirror_slot
        return slot
