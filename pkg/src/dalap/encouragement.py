"""Priority encouragement: decaying priority growth for a goal's predecessors.

For a goal with priority ``p_n`` the transition ``i`` steps earlier becomes
``min(p_n * rho**i + p, cap)`` for ``i = 1..W`` with ``W = floor(ln 0.01 / ln rho)``.
Encouragement only ever adds priority: a predecessor that already sits above
the cap is left as it is rather than clamped down. The cap is ``p_n`` for the broadened-goal rule and the store maximum for the
single max-priority goal variant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import StaleIndexError
from .transition_store import PrioritizedStore

logger = logging.getLogger(__name__)

GROWTH_THRESHOLD = 0.01


def compute_window(rho: float) -> int:
    """Largest ``W`` with ``W <= ln(0.01) / ln(rho)``; 0 when ``rho == 0``."""
    if rho >= 1.0:
        raise ValueError(f"decay coefficient must be < 1, got {rho}")
    if rho < 0.0:
        raise ValueError(f"decay coefficient must be >= 0, got {rho}")
    if rho == 0.0:
        return 0
    # tolerance keeps exact powers (rho = 0.1 -> 2) from flooring one short
    return math.floor(math.log(GROWTH_THRESHOLD) / math.log(rho) + 1e-9)


@dataclass
class EncouragementState:
    rho0: float
    total_episodes: int
    rho: float = field(init=False)
    window: int = field(init=False)
    episode: int = field(init=False, default=0)
    powers: List[float] = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rho0 < 1.0:
            raise ValueError(f"rho0 must lie in [0, 1), got {self.rho0}")
        if self.total_episodes < 1:
            raise ValueError("total_episodes must be positive")
        self._set_rho(self.rho0)

    def _set_rho(self, rho: float) -> None:
        self.rho = rho
        self.window = compute_window(rho)
        self.powers = [rho**i for i in range(1, self.window + 1)]


def decay_rho(state: EncouragementState, episode: int) -> float:
    """Linear schedule ``rho0 * (1 - e / e_total)``, reaching 0 at the last episode."""
    state.episode = episode
    if episode >= state.total_episodes:
        rho = 0.0
    else:
        rho = state.rho0 * (1.0 - episode / state.total_episodes)
    state._set_rho(rho)
    return rho


def select_goals(batch) -> np.ndarray:
    """Batch indices minus the (earliest) minimum-priority entry."""
    priorities = np.asarray(batch.priorities)
    if len(priorities) <= 1:
        return np.empty(0, dtype=np.int64)
    keep = np.ones(len(priorities), dtype=bool)
    keep[int(np.argmin(priorities))] = False
    return np.asarray(batch.indices)[keep]


def select_max_goal(batch) -> np.ndarray:
    """Single goal: the highest-priority entry of the batch."""
    priorities = np.asarray(batch.priorities)
    if len(priorities) == 0:
        return np.empty(0, dtype=np.int64)
    return np.asarray(batch.indices)[[int(np.argmax(priorities))]]


def _propagate(store: PrioritizedStore, goal: int, powers, cap: Optional[float]) -> int:
    """Scalar core of ``encourage``; returns the number of slots updated."""
    depth = min(len(powers), store.steps_back(goal))
    if depth == 0:
        return 0
    priorities = store.priorities
    episodes = store.episodes
    p_n = float(priorities[goal])
    ceiling = p_n if cap is None else cap
    if goal >= depth:
        # common case: the window does not wrap around the ring
        window = slice(goal - depth, goal)
        seg_ep = episodes[window].tolist()
        seg_p = priorities[window].tolist()
    else:
        slots = [(goal - i) % store.capacity for i in range(depth, 0, -1)]
        seg_ep = episodes[slots].tolist()
        seg_p = priorities[slots].tolist()
    episode = episodes[goal]
    updated = 0
    # walk backwards from the slot just before the goal
    for i in range(depth):
        j = depth - 1 - i
        if seg_ep[j] != episode:
            break
        p = seg_p[j]
        grown = min(p_n * powers[i] + p, ceiling)
        # a predecessor already above the ceiling keeps its priority
        if grown > p:
            seg_p[j] = grown
        updated += 1
    if updated:
        if goal >= depth:
            priorities[goal - updated : goal] = seg_p[depth - updated :]
        else:
            priorities[slots[depth - updated :]] = seg_p[depth - updated :]
    return updated


def encourage(
    store: PrioritizedStore,
    goal_index: int,
    state: EncouragementState,
    cap: Optional[float] = None,
    refresh: bool = True,
) -> int:
    """Raise the raw priorities of the transitions preceding ``goal_index``.

    Slot ``goal - i`` (insertion order) becomes ``min(p_n * rho**i + p, cap)``
    (never lower than ``p``) for ``i = 1..W``, stopping at the oldest live entry or at the start of the
    goal's episode. Returns the number of slots updated. With
    ``refresh=False`` the caller re-derives the tree leaves afterwards.
    """
    goal = int(goal_index)
    try:
        store.check_slot(goal)
    except StaleIndexError as exc:
        logger.warning("skipping encouragement for stale goal: %s", exc)
        return 0
    if state.window == 0:
        return 0
    updated = _propagate(store, goal, state.powers, cap)
    if refresh and updated:
        store.refresh_leaves((goal - np.arange(1, updated + 1)) % store.capacity)
    return updated


def encourage_goals(
    store: PrioritizedStore,
    goals,
    state: EncouragementState,
    cap_to_store_max: bool = False,
) -> int:
    """``encourage`` every goal in order, then refresh the touched leaves once."""
    if state.window == 0 or len(goals) == 0:
        return 0
    cap = store.max_priority() if cap_to_store_max else None
    touched = []
    total = 0
    for goal in np.asarray(goals).tolist():
        updated = encourage(store, goal, state, cap=cap, refresh=False)
        if updated:
            total += updated
            touched.extend(range(goal - updated, goal))
    if touched:
        store.refresh_leaves(np.asarray(touched) % store.capacity)
    return total
