"""Named (environment, policy) pairs used by the command line and the demos."""
from __future__ import annotations

import numpy as np

from .benchmarks import MountainCar, PuddleWorld
from .mdp import RIGHT, bernoulli_bandit, deterministic_chain, random_walk_chain, ring_chain
from .policies import EnergyPumpingPolicy, TabularPolicy, UniformPolicy

# problems whose long grid cells need --allow-long
BENCHMARKS = ("mountain-car", "puddle-world")


def _chain(gamma=0.9, n=5, **_):
    return random_walk_chain(int(n), float(gamma)), UniformPolicy(2)


def _deterministic_chain(gamma=0.9, n=5, **_):
    env = deterministic_chain(int(n), float(gamma))
    table = np.zeros((env.n_states, 2))
    table[:, RIGHT] = 1.0
    return env, TabularPolicy(table, "always-right")


def _ring(gamma=0.9, n=5, slip=0.2, env_seed=0, **_):
    return ring_chain(int(n), float(gamma), float(slip), int(env_seed)), UniformPolicy(2)


def _bernoulli(p=0.5, **_):
    return bernoulli_bandit(float(p)), UniformPolicy(1)


def _mountain_car(mix=0.6, max_episode_steps=100, **_):
    return MountainCar(int(max_episode_steps)), EnergyPumpingPolicy(float(mix))


def _puddle_world(noise=0.01, vmax=8000.0, **_):
    return PuddleWorld(float(noise), float(vmax)), UniformPolicy(4)


PROBLEMS = {
    "chain": _chain,
    "deterministic-chain": _deterministic_chain,
    "ring": _ring,
    "bernoulli": _bernoulli,
    "mountain-car": _mountain_car,
    "puddle-world": _puddle_world,
}


def make_problem(name: str, **params):
    """Build ``(env, policy)`` for a registered problem.

    Unknown keyword parameters are ignored so one config section can serve
    several problems; ``None`` values fall back to the defaults.
    """
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**{k: v for k, v in params.items() if v is not None})
