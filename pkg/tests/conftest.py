import numpy as np
import pytest

from valuecert.mdp import EnvSpec, Environment


class OneStepEnv(Environment):
    """Single live state (coordinate 0) whose episode lasts one step and pays
    a reward drawn by ``draw(rng, n)``."""

    def __init__(self, draw, rmax=1.0, name="one-step"):
        super().__init__()
        self.draw = draw
        self.spec = EnvSpec(name, 1, 1, 1.0, rmax, rmax, max_episode_steps=1)
        self.low = np.zeros(1)
        self.high = np.zeros(1)

    def step_batch(self, x, a, rng):
        return np.ones_like(x), self.draw(rng, len(x)), np.ones(len(x), dtype=bool)

    def is_terminal(self, x):
        return np.asarray(x)[:, 0] > 0.5


def uniform_return_env():
    return OneStepEnv(lambda rng, n: rng.random(n), name="uniform-return")


def zero_reward_env():
    return OneStepEnv(lambda rng, n: np.zeros(n), rmax=1.0, name="zero-reward")


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)
