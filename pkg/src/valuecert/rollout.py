"""Sampling (possibly truncated) returns from a start state."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import Environment, State, _check_rewards
from .rng import as_generator

DISCOUNTED = "discounted"
EPISODIC = "episodic"


def truncation_length(eps: float, tau: float, gamma: float, rmax: float) -> int:
    """Smallest rollout length whose discounted tail is at most ``eps * tau``.

    That is ``ceil((log(eps*tau*(1-gamma)) - log(rmax)) / log(gamma))``, or 1
    when ``rmax <= eps*tau*(1-gamma)`` (in particular when ``rmax == 0``).
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discounted truncation needs gamma < 1, got {gamma}; use episodic rollouts")
    if rmax < 0:
        raise ValueError("rmax must be non-negative")
    if rmax == 0 or gamma == 0:
        return 1
    floor = eps * tau * (1.0 - gamma)
    if floor <= 0:
        raise ValueError("eps and tau must be positive for discounted truncation")
    if rmax <= floor:
        return 1
    ratio = (math.log(floor) - math.log(rmax)) / math.log(gamma)
    return max(1, math.ceil(round(ratio, 9)))


@dataclass(frozen=True)
class TruncationPlan:
    mode: str
    length: int | None = None
    eps: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.mode == DISCOUNTED:
            if self.length is None or self.length < 1:
                raise ValueError("discounted mode needs a positive truncation length")
        elif self.mode != EPISODIC:
            raise ValueError(f"unknown truncation mode {self.mode!r}")

    @classmethod
    def for_env(cls, env: Environment, eps: float, tau: float) -> "TruncationPlan":
        """Discounted truncation when gamma < 1, otherwise roll out to termination."""
        gamma = env.spec.gamma
        if gamma < 1.0:
            return cls(DISCOUNTED, truncation_length(eps, tau, gamma, env.spec.rmax), eps, tau)
        return cls(EPISODIC, None, eps, tau)


def sample_returns(
    env: Environment, policy, s: State, plan: TruncationPlan, rng, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` independent returns from ``s``.

    Returns ``(returns, steps)`` where ``steps`` counts the transitions
    simulated for each trajectory.
    """
    gen = as_generator(rng)
    g = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    if s.terminal or n == 0:
        return g, steps
    spec = env.spec
    x = np.tile(np.asarray(s.coords, dtype=float), (n, 1))
    active = np.arange(n)
    discount = 1.0
    k = 0
    while active.size:
        if plan.mode == DISCOUNTED and k >= plan.length:
            break
        if k >= spec.max_episode_steps:
            if spec.time_limit:
                break
            raise RuntimeError(
                f"{spec.name}: episode exceeded max_episode_steps={spec.max_episode_steps} "
                "without terminating"
            )
        xa = x[active]
        a = policy.sample(xa, gen)
        x_next, r, done = env.step_batch(xa, a, gen)
        _check_rewards(env, r)
        g[active] += discount * r
        steps[active] += 1
        x[active] = x_next
        discount *= spec.gamma
        k += 1
        active = active[~done]
    if np.max(np.abs(g)) > spec.vmax * (1 + 1e-9) + 1e-12:
        raise RuntimeError(f"{spec.name}: sampled return exceeds vmax={spec.vmax}")
    return g, steps


def sample_return(env: Environment, policy, s: State, plan: TruncationPlan, rng) -> float:
    return float(sample_returns(env, policy, s, plan, rng, 1)[0][0])


class ReturnSampler:
    """Callable ``draw(n) -> (returns, steps)`` bound to one start state and
    one random stream."""

    def __init__(self, env: Environment, policy, s: State, plan: TruncationPlan, rng):
        self.env, self.policy, self.state, self.plan = env, policy, s, plan
        self.gen = as_generator(rng)

    def __call__(self, n: int):
        return sample_returns(self.env, self.policy, self.state, self.plan, self.gen, n)
