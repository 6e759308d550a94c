"""Executable acceptance checks.

Each ``check_*`` function runs one end-to-end property at a configurable size
and returns a :class:`CheckResult`. The acceptance tests call them at full
size; ``dalap selftest`` calls them at reduced sizes.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .approximator import DenseNet, backward
from .config import ExperimentConfig, SuiteConfig
from .encouragement import EncouragementState, compute_window, decay_rho, encourage
from .envs import CartPoleEnv
from .harness import emit, run_suite
from .sampling import SamplingPolicy, draw_minibatch, probability_of, raw_importance_weights
from .similarity import AttentionParams, ParallelSimilarity
from .transition_store import PrioritizedStore, StorePair, Transition


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(fn: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def wrapper(*args, **kwargs) -> CheckResult:
        start = time.perf_counter()
        result = fn(*args, **kwargs)
        result.seconds = time.perf_counter() - start
        return result

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _filled_store(priorities, policy: SamplingPolicy) -> PrioritizedStore:
    n = len(priorities)
    store = PrioritizedStore(n, 1, policy.epsilon, policy.transform)
    for _ in range(n):
        store.push(Transition(np.zeros(1), 0, 0.0, True, np.zeros(1)))
    store.update_priorities(np.arange(n), priorities)
    return store


@_timed
def check_sampling_fidelity(vectors: int = 50, n: int = 64, draws: int = 10**6, seed: int = 0) -> CheckResult:
    """Stratified prioritized draws against ``p**alpha / sum p**alpha``."""
    rng = np.random.default_rng(seed)
    policy = SamplingPolicy("per", alpha=0.6, epsilon=1e-4)
    m = 64
    worst = 0.0
    for _ in range(vectors):
        priorities = rng.exponential(1.0, size=n) * rng.choice([0.1, 1.0, 10.0])
        store = _filled_store(priorities, policy)
        floored = np.maximum(priorities, policy.epsilon)
        expected = floored**policy.alpha / np.sum(floored**policy.alpha)
        counts = np.zeros(n)
        remaining = draws
        while remaining:
            batches = min(remaining // m or 1, 4096)
            # same stratified uniforms as the prioritized arm of draw_minibatch
            u = (np.arange(m) + rng.random((batches, m))) / m
            idx = store.sample_mass(u.ravel())[: min(remaining, batches * m)]
            counts += np.bincount(idx, minlength=n)
            remaining -= idx.size
        tv = 0.5 * float(np.abs(counts / draws - expected).sum())
        worst = max(worst, tv)
    return CheckResult(1, "sampling fidelity", worst < 0.01, f"max total variation {worst:.4g} (< 0.01)")


@_timed
def check_unbiasedness(stores: int = 100, seed: int = 1) -> CheckResult:
    """``P(i) * w(i) = 1/N`` at ``beta = 1`` for every entry."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(stores):
        n = int(rng.integers(1, 200))
        mode = str(rng.choice(["per", "lap", "uniform"]))
        policy = SamplingPolicy(mode, alpha=float(rng.random()), epsilon=1e-4)
        store = _filled_store(rng.exponential(2.0, size=n), policy)
        probs = probability_of(policy, store)
        product = probs * raw_importance_weights(probs, 1.0, n)
        worst = max(worst, float(np.max(np.abs(product * n - 1.0))))
    return CheckResult(2, "unbiasedness identity", worst <= 1e-12, f"max relative error {worst:.3g} (<= 1e-12)")


def _central_difference(net, states, actions, targets, weights, kind, h=1e-6) -> np.ndarray:
    grad = np.zeros(net.n_params)
    for k in range(net.n_params):
        keep = net.flat[k]
        net.flat[k] = keep + h
        up = backward(net, states, actions, targets, weights, kind)[0]
        net.flat[k] = keep - h
        down = backward(net, states, actions, targets, weights, kind)[0]
        net.flat[k] = keep
        grad[k] = (up - down) / (2 * h)
    return grad


@_timed
def check_gradients(nets: int = 100, max_params: int = 200, seed: int = 2) -> CheckResult:
    """Backprop against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < nets:
        depth = int(rng.integers(1, 4))
        sizes = [int(rng.integers(1, 7)) for _ in range(depth + 1)] + [int(rng.integers(1, 4))]
        net = DenseNet(sizes, rng)
        if net.n_params > max_params:
            continue
        m = int(rng.integers(1, 9))
        states = rng.normal(size=(m, sizes[0]))
        actions = rng.integers(sizes[-1], size=m)
        targets = rng.normal(size=m) * 3
        weights = rng.random(m)
        kind = "mse" if done % 2 == 0 else "huber"
        _, grad, _ = backward(net, states, actions, targets, weights, kind)
        numeric = _central_difference(net, states, actions, targets, weights, kind)
        # relative error, floored so entries near zero are compared absolutely
        scale = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-3)
        worst = max(worst, float(np.max(np.abs(grad - numeric) / scale)))
        done += 1
    return CheckResult(3, "gradient correctness", worst <= 1e-4, f"max relative error {worst:.3g} (<= 1e-4)")


def naive_encourage(priorities, episodes, oldest, capacity, goal, rho, cap=None) -> List[float]:
    """Term-by-term growth rule, one slot at a time, on plain lists."""
    p = list(priorities)
    p_n = p[goal]
    ceiling = p_n if cap is None else cap
    for i in range(1, compute_window(rho) + 1):
        if i > (goal - oldest) % capacity:
            break
        slot = (goal - i) % capacity
        if episodes[slot] != episodes[goal]:
            break
        p[slot] = max(p[slot], min(p_n * rho**i + p[slot], ceiling))
    return p


def _random_buffer(rng) -> PrioritizedStore:
    capacity = int(rng.integers(1, 40))
    store = PrioritizedStore(capacity, 1, epsilon=1e-6)
    episode = 0
    for _ in range(int(rng.integers(1, 3 * capacity + 1))):
        if rng.random() < 0.1:
            episode += 1
        store.push(Transition(np.zeros(1), 0, 0.0, True, np.zeros(1), episode=episode))
    values = rng.random(store.count) * float(rng.choice([0.01, 1.0, 100.0]))
    store.update_priorities(np.arange(store.count), values)
    return store


@_timed
def check_encouragement_oracle(states: int = 1000, seed: int = 3) -> CheckResult:
    """``encourage`` against the per-term oracle, bit for bit."""
    rng = np.random.default_rng(seed)
    mismatches = capped = wrapped = 0
    for _ in range(states):
        store = _random_buffer(rng)
        goal = int(rng.integers(store.count))
        rho = float(rng.choice([0.0, 0.1, 0.4, 0.65, 0.99, rng.random()]))
        cap = store.max_priority() if rng.random() < 0.3 else None
        capped += cap is not None
        wrapped += store.steps_back(goal) < compute_window(rho)
        expected = naive_encourage(
            store.priorities.tolist(), store.episodes.tolist(), store.oldest, store.capacity, goal, rho, cap
        )
        state = EncouragementState(0.65, 1)
        state._set_rho(rho)
        encourage(store, goal, state, cap=cap)
        same = store.priorities.tolist() == expected
        same = same and store.tree.leaves(store.count).tolist() == expected[: store.count]
        mismatches += not same
    detail = f"{mismatches} mismatches in {states} states ({capped} capped, {wrapped} window-boundary)"
    return CheckResult(4, "encouragement oracle", mismatches == 0, detail)


@_timed
def check_schedule(rho0: float = 0.65, total: int = 200) -> CheckResult:
    state = EncouragementState(rho0, total)
    got = [decay_rho(state, e) for e in (0, total // 2, total)]
    want = [rho0 * (1 - e / total) for e in (0, total // 2, total)]
    windows = [compute_window(r) for r in (0.1, 0.4, 0.65)]
    ok = got == want and windows == [2, 5, 10]
    return CheckResult(5, "schedule exactness", ok, f"rho {got}, windows {windows} (expected [2, 5, 10])")


def _cartpole_pair(size: int, rng) -> StorePair:
    env = CartPoleEnv(rng)
    pair = StorePair(size, env.obs_dim)
    state = env.reset()
    episode = 0
    while len(pair) < size:
        action = int(rng.integers(2))
        outcome = env.step(action)
        pair.push(Transition(state, action, outcome.reward, not outcome.terminal, outcome.state, episode=episode))
        if outcome.terminal:
            state = env.reset()
            episode += 1
        else:
            state = outcome.state
    return pair


@_timed
def check_similarity_null(trials: int = 100, m: int = 64, seed: int = 4) -> CheckResult:
    """Uniform-vs-uniform increments centre on 0; a degenerate batch scores higher."""
    rng = np.random.default_rng(seed)
    pair = _cartpole_pair(2000, rng)
    policy = SamplingPolicy("uniform")
    params = AttentionParams.initialise(4 + 2, 8, seed=seed, n_actions=2)
    psan = ParallelSimilarity(params, beta0=0.4)
    null = []
    for _ in range(trials):
        a = draw_minibatch(policy, pair, m, "RUS", rng)
        b = draw_minibatch(policy, pair, m, "RUS", rng)
        null.append(psan(a, b).delta)
    null = np.array(null)
    se = null.std(ddof=1) / math.sqrt(trials)
    null_ok = abs(null.mean()) <= 2 * se
    positive = 0
    for _ in range(trials):
        rus = draw_minibatch(policy, pair, m, "RUS", rng)
        pick = draw_minibatch(policy, pair, 1, "RUS", rng)
        degenerate = np.tile(pick.state_actions(2), (m, 1))
        positive += psan(degenerate, rus).delta > 0
    detail = (
        f"null mean {null.mean():.4g} vs 2 SE {2 * se:.4g}; "
        f"degenerate batch positive in {positive}/{trials} (>= {math.ceil(0.95 * trials)})"
    )
    return CheckResult(6, "similarity null test", null_ok and positive >= 0.95 * trials, detail)


# Hyperparameters held by the comparison: net, step size, discount, buffer,
# batch and episode count. The rest came from a small sweep: exploration decays
# over 10k steps, the target syncs every 200 phases, and both frameworks use MSE.
REPRODUCTION_BASE = ExperimentConfig(
    env="cartpole",
    episodes=200,
    budget_steps=40_000,
    batch_size=64,
    step_size=1e-3,
    gamma=0.99,
    capacity=20_000,
    hidden_sizes=(24, 24, 24),
    target_sync_interval=200,
    eps_decay_steps=10_000,
    loss_kind="mse",
)


@_timed
def check_reproduction(
    seeds: int = 10,
    base: ExperimentConfig = REPRODUCTION_BASE,
    min_final: float = 170.0,
    min_count: int = 7,
    jobs: int = 1,
    report: Optional[Dict[str, object]] = None,
) -> CheckResult:
    """Paired DALAP vs PER cart-pole runs."""
    suite = SuiteConfig(base=base, seeds=list(range(seeds)), frameworks=["dalap", "per"], jobs=jobs)
    result = run_suite(suite)
    runs = {(r.framework, r.seed): r for r in result.records}
    complete = [s for s in range(seeds) if ("dalap", s) in runs and ("per", s) in runs]
    final_ok = sum(runs[("dalap", s)].final20_mean >= min_final for s in complete)
    auc_ok = sum(runs[("dalap", s)].auc >= runs[("per", s)].auc for s in complete)
    per_final = sum(runs[("per", s)].final20_mean >= min_final for s in complete)
    if report is not None:
        report.update(
            {
                "dalap_final20": [runs[("dalap", s)].final20_mean for s in complete],
                "per_final20": [runs[("per", s)].final20_mean for s in complete],
                "dalap_auc": [runs[("dalap", s)].auc for s in complete],
                "per_auc": [runs[("per", s)].auc for s in complete],
                "failures": result.failures,
            }
        )
    detail = (
        f"(a) dalap final-20 mean >= {min_final:g} in {final_ok}/{seeds} (need {min_count}); "
        f"(b) dalap AUC >= per AUC in {auc_ok}/{seeds} (need {min_count}); "
        f"per final-20 >= {min_final:g} in {per_final}/{seeds}; {len(result.failures)} failed runs"
    )
    passed = final_ok >= min_count and auc_ok >= min_count and not result.failures
    return CheckResult(7, "cart-pole reproduction", passed, detail)


@_timed
def check_determinism(episodes: int = 30, seeds: int = 2, frameworks=("uniform", "per", "lap", "pser", "alap", "dalap")) -> CheckResult:
    """The same suite twice gives byte-identical runs.csv and diag.csv."""
    base = REPRODUCTION_BASE.replace(episodes=episodes, budget_steps=episodes * 200)
    suite = SuiteConfig(base=base, seeds=list(range(seeds)), frameworks=list(frameworks), experiment_id="determinism")
    with tempfile.TemporaryDirectory() as tmp:
        outputs = []
        for name in ("first", "second"):
            out = emit(run_suite(suite), Path(tmp) / name)
            outputs.append({f: (out / f).read_bytes() for f in ("runs.csv", "diag.csv")})
        same = outputs[0] == outputs[1]
        rows = outputs[0]["runs.csv"].count(b"\n") - 1
    return CheckResult(8, "determinism", same, f"runs.csv and diag.csv identical: {same} ({rows} reward rows)")


@_timed
def check_sparse_probe(episodes: int = 150, length: int = 20, seed: int = 5) -> CheckResult:
    """Encouragement fires on the sparse chain for DALAP and never for PER."""
    from .agent import train

    base = ExperimentConfig(
        env="chain",
        chain_length=length,
        episodes=episodes,
        budget_steps=episodes * 4 * length,
        batch_size=16,
        capacity=20_000,
        target_sync_interval=100,
        seed=seed,
    )
    dalap = train(base.replace(framework="dalap"))
    per = train(base.replace(framework="per"))
    successes = [e for e, r in enumerate(dalap.rewards) if r > 0]
    if not successes:
        return CheckResult(9, "sparse-reward probe", False, "DALAP never reached the rewarding end")
    after = dalap.encouraged[successes[0] + 1 :] or dalap.encouraged[successes[0] :]
    rate = float(np.mean(after))
    per_total = int(sum(per.encouraged))
    detail = (
        f"first success at episode {successes[0]}; dalap {rate:.1f} encouraged slots/episode after it; "
        f"per {per_total} in total"
    )
    return CheckResult(9, "sparse-reward probe", rate >= 1.0 and per_total == 0, detail)


ALL_CHECKS = {
    1: check_sampling_fidelity,
    2: check_unbiasedness,
    3: check_gradients,
    4: check_encouragement_oracle,
    5: check_schedule,
    6: check_similarity_null,
    7: check_reproduction,
    8: check_determinism,
    9: check_sparse_probe,
}

# reduced sizes for a quick self-test
QUICK_ARGS = {
    1: dict(vectors=5, draws=10**5),
    2: dict(stores=20),
    3: dict(nets=10),
    4: dict(states=200),
    5: dict(),
    6: dict(trials=100),
    8: dict(episodes=5, seeds=1, frameworks=("per", "dalap")),
    9: dict(episodes=150),
}
