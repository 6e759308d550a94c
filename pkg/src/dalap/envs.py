"""Two small episodic environments with discrete actions.

Cart-pole constants (standard formulation, explicit Euler):

=================  ========
gravity            9.8
cart mass          1.0
pole mass          0.1
pole half-length   0.5
force magnitude    10.0
timestep           0.02
angle limit        12 deg
position limit     2.4
max steps          200
=================  ========
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np


class StepResult(NamedTuple):
    state: np.ndarray
    reward: float
    terminal: bool
    truncated: bool = False


class EnvTerminated(RuntimeError):
    """``step`` was called on a finished episode."""


class CartPoleEnv:
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5
    force_mag = 10.0
    tau = 0.02
    theta_limit = 12 * 2 * math.pi / 360
    x_limit = 2.4
    max_steps = 200

    obs_dim = 4
    n_actions = 2

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = np.zeros(4)
        self.steps = 0
        self.done = True

    def reset(self) -> np.ndarray:
        self.state = self.rng.uniform(-0.05, 0.05, size=4)
        self.steps = 0
        self.done = False
        return self.state.copy()

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EnvTerminated("cart-pole episode already finished; call reset()")
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        total_mass = self.masspole + self.masscart
        polemass_length = self.masspole * self.length
        temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / total_mass)
        )
        xacc = temp - polemass_length * thetaacc * costheta / total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = np.array([x, x_dot, theta, theta_dot])
        self.steps += 1

        failed = abs(x) > self.x_limit or abs(theta) > self.theta_limit
        truncated = not failed and self.steps >= self.max_steps
        self.done = failed or truncated
        return StepResult(self.state.copy(), 1.0, self.done, truncated)


class SparseChainEnv:
    """A corridor of ``length`` cells observed as a one-hot vector.

    Action 1 moves right, action 0 moves left. Stepping right off the last
    cell pays 1 and ends the episode; stepping left off cell 0 ends it with
    nothing. Episodes are truncated after ``4 * length`` steps.
    """

    n_actions = 2

    def __init__(self, length: int = 20, start: int = 1, rng: Optional[np.random.Generator] = None):
        if length < 2:
            raise ValueError("chain length must be at least 2")
        if not 0 <= start < length:
            raise ValueError(f"start cell {start} outside chain of length {length}")
        self.length = length
        self.start = start
        self.obs_dim = length
        self.max_steps = 4 * length
        self.rng = rng
        self.position = start
        self.steps = 0
        self.done = True

    def _observe(self) -> np.ndarray:
        obs = np.zeros(self.length)
        obs[self.position] = 1.0
        return obs

    def reset(self) -> np.ndarray:
        self.position = self.start
        self.steps = 0
        self.done = False
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EnvTerminated("chain episode already finished; call reset()")
        self.steps += 1
        if action == 1 and self.position == self.length - 1:
            self.done = True
            return StepResult(self._observe(), 1.0, True, False)
        if action == 0 and self.position == 0:
            self.done = True
            return StepResult(self._observe(), 0.0, True, False)
        self.position += 1 if action == 1 else -1
        truncated = self.steps >= self.max_steps
        self.done = truncated
        return StepResult(self._observe(), 0.0, truncated, truncated)


def make_env(name: str, rng: np.random.Generator, chain_length: int = 20):
    if name == "cartpole":
        return CartPoleEnv(rng)
    if name == "chain":
        return SparseChainEnv(chain_length, rng=rng)
    raise ValueError(f"unknown environment {name!r}; expected 'cartpole' or 'chain'")
