"""DQN carrier running one replay framework end to end.

Every environment step stores the transition in both buffers. Once more than
``replay_period`` steps have been taken (and a minibatch fits), each step runs
``replay_period`` replay iterations:

1. prioritized minibatch,
2. goal selection and priority encouragement (dalap / pser),
3. uniform minibatch and similarity-fitted beta (dalap / alap),
4. TD errors and priority updates,
5. importance weights and gradient accumulation,

followed by a single optimizer step and, every ``target_sync_interval``
phases, a target-network copy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .approximator import DenseNet, OptimizerState, backward, optimizer_step
from .config import ExperimentConfig
from .encouragement import (
    EncouragementState,
    decay_rho,
    encourage_goals,
    select_goals,
    select_max_goal,
)
from .envs import make_env
from .errors import TrainingDiverged
from .sampling import SamplingPolicy, draw_minibatch
from .similarity import AttentionParams, ParallelSimilarity
from .transition_store import StorePair, Transition

logger = logging.getLogger(__name__)


def act(net: DenseNet, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(net.output_dim))
    return int(np.argmax(net.forward(state)))


def bootstrap_targets(target_net: DenseNet, rewards, discounts, next_states, gamma: float):
    q_next = target_net.forward(next_states).max(axis=1)
    return np.asarray(rewards) + gamma * np.asarray(discounts) * q_next


def td_error(net: DenseNet, target_net: DenseNet, transition: Transition, gamma: float) -> float:
    """``r + gamma * [not terminal] * max_a' Q_target(s', a') - Q(s, a)``."""
    discount = 1.0 if transition.discount_active else 0.0
    next_q = float(target_net.forward(transition.next_state).max())
    q = float(net.forward(transition.state)[transition.action])
    return transition.reward + gamma * discount * next_q - q


def exploration_rate(config: ExperimentConfig, step: int) -> float:
    frac = min(1.0, step / config.exploration_decay_steps)
    return config.eps_start + frac * (config.eps_end - config.eps_start)


@dataclass
class TrainResult:
    rewards: List[float] = field(default_factory=list)
    diag_steps: List[int] = field(default_factory=list)
    betas: List[Optional[float]] = field(default_factory=list)
    deltas: List[Optional[float]] = field(default_factory=list)
    rhos: List[Optional[float]] = field(default_factory=list)
    encouraged: List[int] = field(default_factory=list)
    steps: int = 0
    optimizer_steps: int = 0
    negative_deltas: int = 0


class Agent:
    """All mutable state of one experiment: networks, buffers, schedules, rngs."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        env_ss, explore_ss, sample_ss, init_ss, attn_ss = np.random.SeedSequence(config.seed).spawn(5)
        self.env = make_env(config.env, np.random.default_rng(env_ss), config.chain_length)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.sample_rng = np.random.default_rng(sample_ss)

        obs_dim, n_actions = self.env.obs_dim, self.env.n_actions
        sizes = [obs_dim, *config.hidden_sizes, n_actions]
        self.net = DenseNet(sizes, np.random.default_rng(init_ss))
        self.target_net = self.net.copy()
        self.optimizer = OptimizerState(self.net.n_params, step_size=config.step_size)

        self.policy = SamplingPolicy(config.sampling_mode, config.alpha, config.priority_eps)
        self.stores = StorePair(config.capacity, obs_dim, config.priority_eps, self.policy.transform)
        self.loss_kind = config.resolved_loss_kind

        fw = config.framework
        self.encouragement = (
            EncouragementState(config.rho0, config.episodes) if fw in ("dalap", "pser") else None
        )
        self.similarity = None
        if fw in ("dalap", "alap"):
            attn_seed = int(attn_ss.generate_state(1)[0])
            params = AttentionParams.initialise(
                obs_dim + n_actions, config.attention_dim, attn_seed, n_actions=n_actions
            )
            self.similarity = ParallelSimilarity(params, config.beta0, single_arm=(fw == "alap"))

        self.episode = 0
        self.phases = 0

    def _beta(self, ps_batch):
        """Correction exponent for this replay iteration plus (delta, rho) diagnostics."""
        fw = self.config.framework
        rho = self.encouragement.rho if self.encouragement is not None else None
        if self.similarity is not None:
            rus = draw_minibatch(self.policy, self.stores, self.config.batch_size, "RUS", self.sample_rng)
            report = self.similarity(ps_batch, rus)
            return report.beta, report.delta, rho
        if fw in ("per", "pser"):
            progress = min(1.0, self.episode / self.config.episodes)
            return self.config.beta0 + (1.0 - self.config.beta0) * progress, None, rho
        if fw == "lap":
            return 1.0, None, rho
        return None, None, rho

    def replay_phase(self, step: int, result: TrainResult) -> int:
        """K replay iterations and one optimizer step; returns encouraged-slot count."""
        cfg = self.config
        store = self.stores.prioritized
        grad_total = np.zeros(self.net.n_params)
        encouraged = 0
        for _ in range(cfg.replay_period):
            batch = draw_minibatch(self.policy, self.stores, cfg.batch_size, "PS", self.sample_rng)
            if cfg.framework == "dalap":
                encouraged += encourage_goals(store, select_goals(batch), self.encouragement)
            elif cfg.framework == "pser":
                encouraged += encourage_goals(
                    store, select_max_goal(batch), self.encouragement, cap_to_store_max=True
                )
            beta, delta, rho = self._beta(batch)

            targets = bootstrap_targets(
                self.target_net, batch.rewards, batch.discounts, batch.next_states, cfg.gamma
            )
            weights = batch.apply_beta(beta) if beta is not None else batch.weights
            loss, grad, deltas = backward(
                self.net, batch.states, batch.actions, targets, weights, self.loss_kind
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at step {step} (episode {self.episode}, "
                    f"framework {cfg.framework}, max |delta| {np.max(np.abs(deltas)):.6g})"
                )
            batch.td_errors = deltas
            if cfg.framework != "uniform":
                store.update_priorities(batch.indices, np.abs(deltas) + cfg.priority_eps, batch.stamps)
            grad_total += grad

            if beta is not None or rho is not None:
                result.diag_steps.append(step)
                result.betas.append(beta)
                result.deltas.append(delta)
                result.rhos.append(rho)

        optimizer_step(self.net, grad_total, self.optimizer)
        self.phases += 1
        if self.phases % cfg.target_sync_interval == 0:
            self.target_net.load_from(self.net)
        return encouraged

    def train(self) -> TrainResult:
        cfg = self.config
        result = TrainResult()
        if self.encouragement is not None:
            decay_rho(self.encouragement, 0)
        state = self.env.reset()
        action = act(self.net, state, exploration_rate(cfg, 0), self.explore_rng)
        episode_reward = 0.0
        episode_encouraged = 0
        for t in range(1, cfg.budget_steps + 1):
            outcome = self.env.step(action)
            episode_reward += outcome.reward
            self.stores.push(
                Transition(
                    state=state,
                    action=action,
                    reward=outcome.reward,
                    discount_active=not outcome.terminal or outcome.truncated,
                    next_state=outcome.state,
                    episode=self.episode,
                )
            )
            if t > cfg.replay_period and len(self.stores) >= cfg.batch_size:
                episode_encouraged += self.replay_phase(t, result)
                result.optimizer_steps += 1
            result.steps = t

            if outcome.terminal:
                result.rewards.append(episode_reward)
                result.encouraged.append(episode_encouraged)
                episode_reward = 0.0
                episode_encouraged = 0
                self.episode += 1
                if self.episode >= cfg.episodes:
                    break
                if self.encouragement is not None:
                    decay_rho(self.encouragement, self.episode)
                state = self.env.reset()
            else:
                state = outcome.state
            action = act(self.net, state, exploration_rate(cfg, t), self.explore_rng)
        if self.similarity is not None:
            result.negative_deltas = self.similarity.negative_deltas
        return result


def train(config: ExperimentConfig) -> TrainResult:
    """Run one experiment; a pure function of ``config`` (seed included)."""
    return Agent(config).train()
