"""Simulatable MDPs.

Environments are immutable and vectorised: ``step_batch`` advances a whole
batch of states at once, which is what the rollout sampler uses.  The scalar
``env_step`` wrapper exists for contract checks and small experiments.

Tabular MDPs double as test oracles: ``chain_true_values`` solves the Bellman
equation for them exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import as_generator


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment.

    ``rmax`` bounds every single reward in absolute value, ``vmax`` bounds the
    absolute value of any (possibly truncated) return.  When ``time_limit`` is
    set, reaching ``max_episode_steps`` ends the episode; otherwise running
    past it is treated as a broken environment.
    """

    name: str
    state_dim: int
    n_actions: int
    gamma: float
    rmax: float
    vmax: float
    episodic: bool = True
    max_episode_steps: int = 10_000
    time_limit: bool = False

    def __post_init__(self):
        if self.state_dim < 1 or self.n_actions < 1:
            raise ValueError("state_dim and n_actions must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.rmax < 0 or self.vmax < 0:
            raise ValueError("rmax and vmax must be non-negative")
        if self.gamma < 1.0 and self.vmax > self.rmax / (1.0 - self.gamma) * (1 + 1e-12):
            raise ValueError(
                f"vmax={self.vmax} exceeds rmax/(1-gamma)={self.rmax / (1.0 - self.gamma)}"
            )
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be positive")


@dataclass(frozen=True)
class State:
    coords: tuple[float, ...]
    terminal: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)


class Environment:
    """Base class.  Subclasses set ``spec``, ``low``, ``high`` and implement
    ``step_batch`` and ``is_terminal``."""

    spec: EnvSpec
    low: np.ndarray
    high: np.ndarray

    def __init__(self, state_sampler: Callable | None = None):
        # state_sampler(m, generator) -> (m, state_dim) array; replaces the
        # uniform-over-box default distribution
        self._state_sampler = state_sampler

    def step_batch(self, x: np.ndarray, a: np.ndarray, rng: np.random.Generator):
        """Return ``(x_next, rewards, terminal)`` for a batch of transitions."""
        raise NotImplementedError

    def is_terminal(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_states(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self._state_sampler is not None:
            x = np.asarray(self._state_sampler(m, rng), dtype=float)
            return x.reshape(m, self.spec.state_dim)
        return rng.uniform(self.low, self.high, size=(m, self.spec.state_dim))

    def make_state(self, coords) -> State:
        x = np.asarray(coords, dtype=float).reshape(1, self.spec.state_dim)
        return State(tuple(float(c) for c in x[0]), bool(self.is_terminal(x)[0]))


def _check_rewards(env: Environment, r: np.ndarray):
    if r.size and np.max(np.abs(r)) > env.spec.rmax * (1 + 1e-12) + 1e-12:
        raise RuntimeError(
            f"{env.spec.name}: reward {np.max(np.abs(r))} exceeds rmax={env.spec.rmax}"
        )


def env_step(env: Environment, s: State, a: int, rng) -> tuple[State, float]:
    if s.terminal:
        raise ValueError("cannot step from a terminal state")
    if not 0 <= a < env.spec.n_actions:
        raise ValueError(f"action {a} out of range for {env.spec.n_actions} actions")
    x = np.asarray(s.coords, dtype=float).reshape(1, -1)
    x_next, r, done = env.step_batch(x, np.array([a]), as_generator(rng))
    _check_rewards(env, r)
    return State(tuple(float(c) for c in x_next[0]), bool(done[0])), float(r[0])


def sample_initial_states(env: Environment, m: int, rng) -> list[State]:
    """Draw ``m`` i.i.d. states from the environment's state distribution."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    x = env.sample_states(m, as_generator(rng))
    done = env.is_terminal(x)
    return [State(tuple(float(c) for c in row), bool(t)) for row, t in zip(x, done)]


class TabularMDP(Environment):
    """Finite MDP with transition tensor ``P[s, a, s']`` and reward
    ``R[s, a, s']`` received on the transition.

    States are encoded as a one-dimensional coordinate holding the index.
    """

    def __init__(
        self,
        P,
        R,
        terminal,
        gamma: float,
        name: str = "tabular",
        vmax: float | None = None,
        max_episode_steps: int = 100_000,
        state_sampler: Callable | None = None,
    ):
        super().__init__(state_sampler)
        P = np.asarray(P, dtype=float)
        R = np.asarray(R, dtype=float)
        if R.ndim == 2:
            R = np.repeat(R[:, :, None], P.shape[2], axis=2)
        n_states, n_actions, _ = P.shape
        if P.shape != (n_states, n_actions, n_states) or R.shape != P.shape:
            raise ValueError("P and R must have shape (S, A, S)")
        if not np.allclose(P.sum(axis=2), 1.0):
            raise ValueError("transition rows must sum to 1")
        self.P, self.R = P, R
        self.terminal = np.asarray(terminal, dtype=bool)
        self._cum = np.cumsum(P, axis=2)
        self._cum[:, :, -1] = 1.0
        # row (s, a) shifted by its flat index, so one searchsorted call
        # samples every row of a batch
        n_rows = P.shape[0] * P.shape[1]
        self._flat_cum = (self._cum.reshape(n_rows, -1) + np.arange(n_rows)[:, None]).ravel()
        reachable = P > 0
        rmax = float(np.max(np.abs(R[reachable]))) if reachable.any() else 0.0
        if vmax is None:
            vmax = rmax / (1.0 - gamma) if gamma < 1 else rmax * max_episode_steps
        self.spec = EnvSpec(
            name=name,
            state_dim=1,
            n_actions=n_actions,
            gamma=gamma,
            rmax=rmax,
            vmax=float(vmax),
            episodic=bool(self.terminal.any()),
            max_episode_steps=max_episode_steps,
        )
        self.low = np.zeros(1)
        self.high = np.array([n_states - 1.0])

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def step_batch(self, x, a, rng):
        s = x[:, 0].astype(np.intp)
        a = np.asarray(a, dtype=np.intp)
        u = rng.random(len(s))
        row = s * self.spec.n_actions + a
        s_next = np.searchsorted(self._flat_cum, row + u, side="right") - row * self.n_states
        r = self.R[s, a, s_next]
        return s_next.astype(float)[:, None], r, self.terminal[s_next]

    def is_terminal(self, x):
        return self.terminal[np.asarray(x)[:, 0].astype(np.intp)]

    def sample_states(self, m, rng):
        if self._state_sampler is not None:
            return super().sample_states(m, rng)
        candidates = np.flatnonzero(~self.terminal)
        return rng.choice(candidates, size=m).astype(float)[:, None]


def chain_true_values(env: TabularMDP, policy, gamma: float | None = None) -> np.ndarray:
    """Exact state values of ``policy`` by a direct linear solve.

    Terminal states are pinned to zero.  Raises ``ValueError`` when the
    Bellman system is singular, e.g. gamma = 1 on a chain that never ends.
    """
    gamma = env.spec.gamma if gamma is None else gamma
    idx = np.arange(env.n_states, dtype=float)[:, None]
    pi = policy.probs(idx)
    P_pi = np.einsum("sa,sat->st", pi, env.P)
    r_pi = np.einsum("sa,sat,sat->s", pi, env.P, env.R)
    live = ~env.terminal
    A = np.eye(live.sum()) - gamma * P_pi[np.ix_(live, live)]
    if np.linalg.cond(A) > 1e12:
        raise ValueError("Bellman system is singular; use gamma < 1 or an episodic chain")
    v = np.zeros(env.n_states)
    v[live] = np.linalg.solve(A, r_pi[live])
    return v


# -- chain builders ---------------------------------------------------------

LEFT, RIGHT = 0, 1


def deterministic_chain(n: int = 5, gamma: float = 0.9, reward: float = 1.0) -> TabularMDP:
    """``n`` live states followed by an absorbing terminal state ``n``.

    RIGHT moves one step right, LEFT one step left (floored at 0).  The only
    reward is received on entering the terminal state.
    """
    S = n + 1
    P = np.zeros((S, 2, S))
    R = np.zeros((S, 2, S))
    for s in range(S):
        if s == n:
            P[s, :, s] = 1.0
            continue
        P[s, RIGHT, s + 1] = 1.0
        P[s, LEFT, max(s - 1, 0)] = 1.0
    R[n - 1, RIGHT, n] = reward
    terminal = np.zeros(S, dtype=bool)
    terminal[n] = True
    return TabularMDP(P, R, terminal, gamma, name=f"deterministic-chain-{n}",
                      vmax=abs(reward), max_episode_steps=10_000)


def random_walk_chain(
    n: int = 5, gamma: float = 0.9, left_reward: float = -1.0, right_reward: float = 1.0
) -> TabularMDP:
    """Random-walk chain: live states 1..n between terminal ends 0 and n+1.

    Exiting left pays ``left_reward``, exiting right pays ``right_reward``.
    """
    S = n + 2
    P = np.zeros((S, 2, S))
    R = np.zeros((S, 2, S))
    for s in range(S):
        if s in (0, n + 1):
            P[s, :, s] = 1.0
            continue
        P[s, LEFT, s - 1] = 1.0
        P[s, RIGHT, s + 1] = 1.0
    R[1, LEFT, 0] = left_reward
    R[n, RIGHT, n + 1] = right_reward
    terminal = np.zeros(S, dtype=bool)
    terminal[[0, n + 1]] = True
    vmax = max(abs(left_reward), abs(right_reward))
    return TabularMDP(P, R, terminal, gamma, name=f"random-walk-{n}", vmax=vmax,
                      max_episode_steps=1_000_000)


def ring_chain(n: int = 5, gamma: float = 0.9, slip: float = 0.2, seed: int = 0) -> TabularMDP:
    """Continuing ring with a reward on every transition, drawn once from
    U[-1, 1] per (state, action).  Actions move left/right, slipping in place
    with probability ``slip``."""
    if gamma >= 1:
        raise ValueError("a continuing ring needs gamma < 1")
    S = n
    P = np.zeros((S, 2, S))
    for s in range(S):
        P[s, LEFT, (s - 1) % S] += 1 - slip
        P[s, RIGHT, (s + 1) % S] += 1 - slip
        P[s, :, s] += slip
    R = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(S, 2))
    return TabularMDP(P, R, np.zeros(S, dtype=bool), gamma, name=f"ring-{n}")


def bernoulli_bandit(p: float = 0.5, reward: float = 1.0) -> TabularMDP:
    """One-step episode whose return is ``reward`` with probability ``p``, else 0."""
    P = np.zeros((3, 1, 3))
    P[0, 0, 1], P[0, 0, 2] = p, 1 - p
    P[1, 0, 1] = P[2, 0, 2] = 1.0
    R = np.zeros((3, 1, 3))
    R[0, 0, 1] = reward
    return TabularMDP(P, R, [False, True, True], 1.0, name=f"bernoulli-{p}",
                      vmax=abs(reward), max_episode_steps=1)
