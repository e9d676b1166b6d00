import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valuecert import (
    RngStream,
    UniformPolicy,
    chain_true_values,
    deterministic_chain,
    ring_chain,
    truncation_length,
)
from valuecert.mdp import RIGHT, TabularMDP
from valuecert.policies import TabularPolicy
from valuecert.rollout import ReturnSampler, TruncationPlan, sample_return, sample_returns


def always_right(env):
    table = np.zeros((env.n_states, 2))
    table[:, RIGHT] = 1.0
    return TabularPolicy(table)


def reference_length(eps, tau, gamma, rmax):
    # walk the discount down until the tail fits, as the sampler's guard does
    l, tail = 0, rmax / (1 - gamma)
    while tail > eps * tau * (1 + 1e-12):
        tail *= gamma
        l += 1
    return max(l, 1)


def test_truncation_length_examples():
    assert truncation_length(0.1, 1.0, 0.9, 1.0) == 44
    assert 0.9**44 / 0.1 == pytest.approx(0.096977, abs=1e-6)
    assert 0.9**44 / 0.1 <= 0.1
    assert truncation_length(0.1, 1.0, 0.9, 0.0) == 1
    assert truncation_length(0.5, 2.0, 0.5, 1.0) == 1


def test_truncation_length_needs_discounting():
    with pytest.raises(ValueError, match="episodic"):
        truncation_length(0.1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        truncation_length(0.1, 0.0, 0.9, 1.0)


@given(
    eps=st.floats(1e-3, 1.0),
    tau=st.floats(0.05, 10.0),
    gamma=st.floats(0.05, 0.995),
    rmax=st.floats(0.01, 100.0),
)
@settings(max_examples=300, deadline=None)
def test_truncation_length_bias_and_minimality(eps, tau, gamma, rmax):
    l = truncation_length(eps, tau, gamma, rmax)
    assert l >= 1
    assert rmax * gamma**l / (1 - gamma) <= eps * tau * (1 + 1e-8)
    if l > 1:
        assert rmax * gamma ** (l - 1) / (1 - gamma) > eps * tau * (1 - 1e-8)
    assert abs(l - reference_length(eps, tau, gamma, rmax)) <= 1


def test_truncation_length_monotone_over_grid():
    grid = np.linspace(0.05, 0.95, 10)
    for gamma in (0.5, 0.9, 0.99):
        ls = [truncation_length(e, 1.0, gamma, 1.0) for e in grid]
        assert all(a >= b for a, b in zip(ls, ls[1:]))
        ls = [truncation_length(0.1, t, gamma, 1.0) for t in grid]
        assert all(a >= b for a, b in zip(ls, ls[1:]))
    ls = [truncation_length(0.1, 1.0, g, 1.0) for g in (0.99, 0.95, 0.9, 0.5)]
    assert all(a >= b for a, b in zip(ls, ls[1:]))


def test_plan_modes():
    assert TruncationPlan.for_env(ring_chain(), 0.1, 1.0) == TruncationPlan("discounted", 44, 0.1, 1.0)
    env = deterministic_chain(gamma=1.0)
    assert TruncationPlan.for_env(env, 0.1, 1.0).mode == "episodic"
    with pytest.raises(ValueError):
        TruncationPlan("discounted", 0)


def test_deterministic_chain_return_every_call():
    env = deterministic_chain(5, 0.9)
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    g, steps = sample_returns(env, always_right(env), env.make_state([0]), plan, 0, 50)
    assert np.allclose(g, 0.6561, rtol=1e-12)
    assert np.all(steps == 5)


def test_terminal_state_returns_zero():
    env = deterministic_chain()
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    assert sample_return(env, always_right(env), env.make_state([5]), plan, 0) == 0.0


def test_zero_discount_keeps_first_reward_only():
    env = ring_chain(5, gamma=0.0, slip=0.0)
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    assert plan.length == 1
    policy = TabularPolicy(np.tile([0.0, 1.0], (5, 1)))
    g = sample_return(env, policy, env.make_state([2]), plan, 0)
    assert g == pytest.approx(env.R[2, RIGHT, 3])


def test_steps_match_truncation_length_on_dense_chain():
    env = ring_chain(5, 0.9)
    for eps in (0.3, 0.1, 0.01):
        plan = TruncationPlan.for_env(env, eps, 1.0)
        _, steps = sample_returns(env, UniformPolicy(2), env.make_state([1]), plan, 0, 100)
        assert np.all(steps == truncation_length(eps, 1.0, 0.9, env.spec.rmax))


def test_episode_without_time_limit_overrunning_cap_is_an_error():
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    env = TabularMDP(P, np.ones((2, 1, 2)) * 0.5, [False, True], 1.0, max_episode_steps=30)
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    with pytest.raises(RuntimeError, match="max_episode_steps"):
        sample_returns(env, UniformPolicy(1), env.make_state([0]), plan, 0, 3)


def test_sampler_is_reproducible_and_stream_ordered():
    env = ring_chain()
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    s = env.make_state([0])
    a = ReturnSampler(env, UniformPolicy(2), s, plan, RngStream(1, (1, 0)))
    b = ReturnSampler(env, UniformPolicy(2), s, plan, RngStream(1, (1, 0)))
    first = np.concatenate([a(10)[0], a(20)[0]])
    second = np.concatenate([b(10)[0], b(20)[0]])
    assert np.array_equal(first, second)


def test_truncated_mean_within_bias_plus_noise():
    env = ring_chain(5, 0.9)
    policy = UniformPolicy(2)
    v = chain_true_values(env, policy)
    plan = TruncationPlan.for_env(env, 0.1, 1.0)
    g, _ = sample_returns(env, policy, env.make_state([3]), plan, RngStream(2, (5,)), 100_000)
    se = g.std() / math.sqrt(len(g))
    assert abs(g.mean() - v[3]) <= 0.1 * (abs(v[3]) + 1.0) + 3 * se
