"""Projection-based self-similarity of a minibatch and the beta fit built on it.

A batch of state-action rows ``X`` is projected to ``Q = X @ w_q``; the keys
``K`` are a row shuffle of ``Q``. The score sums the projection of every query
onto its key and scales by ``1/sqrt(d_k)``. Running the scorer on a
prioritized batch and on a uniform batch side by side gives the similarity
increment ``delta = raw_ps - raw_rus``, which is min-max normalised into a
correction exponent ``beta`` in ``[beta0, 1]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class AttentionParams:
    """Fixed (never trained) query projection shared by both arms."""

    w_q: np.ndarray
    shuffle_seed: int = 0
    n_actions: Optional[int] = None
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.w_q = np.asarray(self.w_q, dtype=np.float64)
        if self.w_q.ndim != 2 or self.w_q.shape[1] < 1:
            raise ValueError(f"w_q must be a 2-D matrix with d_k >= 1, got shape {self.w_q.shape}")
        if not np.all(np.isfinite(self.w_q)):
            raise ValueError("w_q has non-finite entries")
        self._rng = np.random.default_rng(self.shuffle_seed)

    @classmethod
    def initialise(cls, input_dim: int, d_k: int, seed: int, n_actions: Optional[int] = None):
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(input_dim)
        w_q = rng.uniform(-bound, bound, size=(input_dim, d_k))
        return cls(w_q=w_q, shuffle_seed=seed + 1, n_actions=n_actions)

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]

    def permutation(self, m: int) -> np.ndarray:
        return self._rng.permutation(m)


def projection_score(q: np.ndarray, k: np.ndarray) -> float:
    """Sum over rows of the projection of ``q_i`` onto ``k_i``.

    Rows with ``|k_i| = 0`` contribute nothing.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape:
        raise ValueError(f"Q and K shapes differ: {q.shape} vs {k.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", k, k))
    dots = np.einsum("ij,ij->i", q, k)
    safe = norms > 0.0
    return float(np.sum(dots[safe] / norms[safe]))


def batch_similarity(x: np.ndarray, params: AttentionParams, permutation=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    if m < 2:
        raise ValueError("batch similarity needs at least two rows")
    if permutation is None:
        permutation = params.permutation(m)
    q = x @ params.w_q
    return projection_score(q, q[permutation]) / math.sqrt(params.d_k)


def _rows(batch, params: AttentionParams) -> np.ndarray:
    if hasattr(batch, "state_actions"):
        if params.n_actions is None:
            raise ValueError("AttentionParams.n_actions is required to encode minibatch actions")
        return batch.state_actions(params.n_actions)
    return np.asarray(batch, dtype=np.float64)


def parallel_similarity(ps_batch, rus_batch, params: AttentionParams, permutations=None):
    """Score both arms with the same projection; returns ``(raw_ps, raw_rus, delta)``."""
    x_ps = _rows(ps_batch, params)
    x_rus = _rows(rus_batch, params)
    if x_ps.shape[0] != x_rus.shape[0]:
        raise ValueError(f"arm sizes differ: {x_ps.shape[0]} vs {x_rus.shape[0]}")
    perm_ps, perm_rus = permutations if permutations is not None else (None, None)
    raw_ps = batch_similarity(x_ps, params, perm_ps)
    raw_rus = batch_similarity(x_rus, params, perm_rus)
    return raw_ps, raw_rus, raw_ps - raw_rus


@dataclass
class RunningExtrema:
    lo: Optional[float] = None
    hi: Optional[float] = None

    def update(self, value: float) -> None:
        self.lo = value if self.lo is None else min(self.lo, value)
        self.hi = value if self.hi is None else max(self.hi, value)


def fit_beta(delta: float, state: RunningExtrema, beta0: float) -> float:
    """Fold ``delta`` into the running extrema and map it to ``[beta0, 1]``.

    A negative increment is treated as noise and always yields ``beta0``.
    """
    if not 0.0 <= beta0 < 1.0:
        raise ValueError(f"beta0 must lie in [0, 1), got {beta0}")
    state.update(delta)
    span = state.hi - state.lo
    scaled = (delta - state.lo) / span if span > 0.0 and delta >= 0.0 else 0.0
    return beta0 + (1.0 - beta0) * min(max(scaled, 0.0), 1.0)


@dataclass
class SimilarityReport:
    raw_ps: Optional[float]
    raw_rus: float
    delta: Optional[float]
    beta: float
    running_lo: float
    running_hi: float


class ParallelSimilarity:
    """Two scorers sharing one projection, plus the persistent beta normaliser.

    With ``single_arm=True`` only the uniform batch is scored and beta is fit
    on its raw similarity (the single-network baseline).
    """

    def __init__(self, params: AttentionParams, beta0: float = 0.4, single_arm: bool = False):
        self.params = params
        self.beta0 = beta0
        self.single_arm = single_arm
        self.extrema = RunningExtrema()
        self.negative_deltas = 0

    def __call__(self, ps_batch, rus_batch) -> SimilarityReport:
        if self.single_arm:
            raw_rus = batch_similarity(_rows(rus_batch, self.params), self.params)
            beta = fit_beta(raw_rus, self.extrema, self.beta0)
            return SimilarityReport(None, raw_rus, None, beta, self.extrema.lo, self.extrema.hi)
        raw_ps, raw_rus, delta = parallel_similarity(ps_batch, rus_batch, self.params)
        if delta < 0.0:
            self.negative_deltas += 1
            logger.debug("negative similarity increment %.6g", delta)
        beta = fit_beta(delta, self.extrema, self.beta0)
        return SimilarityReport(raw_ps, raw_rus, delta, beta, self.extrema.lo, self.extrema.hi)
