"""Fixed stochastic policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import State
from .rng import as_generator


@dataclass(frozen=True)
class PolicySpec:
    name: str
    mix: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError(f"mixing probability must lie in [0, 1], got {self.mix}")


class Policy:
    n_actions: int
    spec: PolicySpec

    def probs(self, x: np.ndarray) -> np.ndarray:
        """Action probabilities, shape ``(batch, n_actions)``."""
        raise NotImplementedError

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum(self.probs(x), axis=1)
        u = rng.random(len(x))
        a = (u[:, None] >= cum).sum(axis=1)
        return np.minimum(a, self.n_actions - 1)


class UniformPolicy(Policy):
    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.spec = PolicySpec("uniform", 1.0)

    def probs(self, x):
        return np.full((len(x), self.n_actions), 1.0 / self.n_actions)

    def sample(self, x, rng):
        return rng.integers(self.n_actions, size=len(x))


class TabularPolicy(Policy):
    def __init__(self, table, name: str = "tabular"):
        table = np.asarray(table, dtype=float)
        if np.any(table < 0) or not np.allclose(table.sum(axis=1), 1.0):
            raise ValueError("each row of the policy table must be a distribution")
        self.table = table
        self.n_actions = table.shape[1]
        self.spec = PolicySpec(name)

    def probs(self, x):
        return self.table[np.asarray(x)[:, 0].astype(np.intp)]


class EnergyPumpingPolicy(Policy):
    """Mountain Car: accelerate in the direction of the velocity, replaced by a
    uniformly random action with probability ``mix``.

    Actions are 0 = reverse, 1 = coast, 2 = forward; zero velocity coasts.
    """

    n_actions = 3

    def __init__(self, mix: float = 0.6):
        self.spec = PolicySpec("energy-pumping", mix)
        self.mix = mix

    def _pump(self, x):
        return (np.sign(np.asarray(x)[:, 1]) + 1).astype(np.intp)

    def probs(self, x):
        out = np.full((len(x), 3), self.mix / 3)
        out[np.arange(len(x)), self._pump(x)] += 1 - self.mix
        return out

    def sample(self, x, rng):
        a = self._pump(x)
        explore = rng.random(len(x)) < self.mix
        a[explore] = rng.integers(3, size=int(explore.sum()))
        return a


def policy_sample(policy: Policy, s: State, rng) -> int:
    if s.terminal:
        raise ValueError("no action is taken in a terminal state")
    x = np.asarray(s.coords, dtype=float).reshape(1, -1)
    return int(policy.sample(x, as_generator(rng))[0])
