"""Continuous-state benchmark domains: Mountain Car and Puddle World."""
from __future__ import annotations

import numpy as np

from .mdp import EnvSpec, Environment


class MountainCar(Environment):
    """Classic Mountain Car with -1 reward per step.

    State is (position, velocity).  The episode ends when the position reaches
    0.5 or after ``max_episode_steps`` steps, so every return lies in
    [-max_episode_steps, -1].
    """

    GOAL = 0.5

    def __init__(self, max_episode_steps: int = 100, state_sampler=None):
        super().__init__(state_sampler)
        self.spec = EnvSpec(
            name="mountain-car",
            state_dim=2,
            n_actions=3,
            gamma=1.0,
            rmax=1.0,
            vmax=float(max_episode_steps),
            episodic=True,
            max_episode_steps=max_episode_steps,
            time_limit=True,
        )
        self.low = np.array([-1.2, -0.07])
        self.high = np.array([0.6, 0.07])

    def step_batch(self, x, a, rng):
        pos, vel = x[:, 0], x[:, 1]
        vel = np.clip(vel + 0.001 * (np.asarray(a) - 1) - 0.0025 * np.cos(3 * pos), -0.07, 0.07)
        pos = np.clip(pos + vel, -1.2, 0.6)
        vel = np.where((pos <= -1.2) & (vel < 0), 0.0, vel)
        x_next = np.stack([pos, vel], axis=1)
        return x_next, np.full(len(x), -1.0), pos >= self.GOAL

    def is_terminal(self, x):
        return np.asarray(x)[:, 0] >= self.GOAL


class PuddleWorld(Environment):
    """Puddle World on the unit square.

    Four actions (0 up, 1 down, 2 right, 3 left) move 0.05 plus Gaussian noise
    per coordinate.  Each step costs 1, plus 400 times the depth of the agent
    inside each of two capsule-shaped puddles of radius 0.1.  The goal is the
    corner x >= 0.95, y >= 0.95.  The episode cap keeps every return within
    ``vmax``.
    """

    PUDDLES = (((0.1, 0.75), (0.45, 0.75)), ((0.45, 0.4), (0.45, 0.8)))
    RADIUS = 0.1
    STEP = 0.05
    GOAL = 0.95
    _MOVES = np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]])

    def __init__(self, noise: float = 0.01, vmax: float = 8000.0, state_sampler=None):
        super().__init__(state_sampler)
        self.noise = noise
        rmax = 1.0 + 400.0 * self.RADIUS * len(self.PUDDLES)
        cap = int(vmax // rmax)
        self.spec = EnvSpec(
            name="puddle-world",
            state_dim=2,
            n_actions=4,
            gamma=1.0,
            rmax=rmax,
            vmax=vmax,
            episodic=True,
            max_episode_steps=cap,
            time_limit=True,
        )
        self.low = np.zeros(2)
        self.high = np.ones(2)

    def puddle_depth(self, x: np.ndarray) -> np.ndarray:
        depth = np.zeros(len(x))
        for (ax, ay), (bx, by) in self.PUDDLES:
            a = np.array([ax, ay])
            ab = np.array([bx - ax, by - ay])
            t = np.clip(((x - a) @ ab) / (ab @ ab), 0.0, 1.0)
            dist = np.linalg.norm(x - (a + t[:, None] * ab), axis=1)
            depth += np.maximum(0.0, self.RADIUS - dist)
        return depth

    def step_batch(self, x, a, rng):
        move = self._MOVES[np.asarray(a)] * self.STEP
        x_next = np.clip(x + move + rng.normal(0.0, self.noise, size=x.shape), 0.0, 1.0)
        r = -1.0 - 400.0 * self.puddle_depth(x_next)
        return x_next, r, self.is_terminal(x_next)

    def is_terminal(self, x):
        x = np.asarray(x)
        return (x[:, 0] >= self.GOAL) & (x[:, 1] >= self.GOAL)
