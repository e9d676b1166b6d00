"""Acceptance suite.  Each test prints one ``PASS``/``FAIL`` line with the
measured quantities, then asserts the verdict.

Run on its own with ``pytest tests/test_acceptance.py -v`` (about 15 minutes
on one core) or ``python tests/test_acceptance.py``.
"""
import math

import numpy as np
import pytest

from conftest import uniform_return_env
from valuecert import RngStream, chain_true_values, ebgstop_tau, ring_chain
from valuecert import loss as L
from valuecert.cache import CacheError, load_cache, loads_cache, save_cache
from valuecert.experiments import (
    ExperimentGrid,
    chain_coverage,
    median_samples,
    oracle_compare,
    run_experiment,
    write_experiment,
)
from valuecert.mdp import RIGHT
from valuecert.problems import make_problem
from valuecert.rollout import TruncationPlan, sample_returns, truncation_length
from valuecert.policies import TabularPolicy, UniformPolicy


@pytest.fixture
def report(capsys):
    def emit(n, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
        return passed

    return emit


# 1 ------------------------------------------------------------------------


def test_criterion_1_formula_examples(report):
    log40, log6000 = math.log(40), math.log(6000)
    hoeff = math.sqrt(4 * log40 / (2 * 2952))
    tail = 0.9**44 / 0.1
    # (name, computed, exact reference evaluated independently, printed hand value, printed digits)
    cases = [
        ("truncation_length(0.1,1,0.9,1)", truncation_length(0.1, 1, 0.9, 1),
         math.ceil(math.log(0.01) / math.log(0.9)), 44, 0),
        ("truncation_length(0.5,2,0.5,1)", truncation_length(0.5, 2, 0.5, 1), 1, 1, 0),
        ("truncation tail at l=44", tail, 0.9**44 * 10, 0.0097, 4),
        ("required_states(0.05,0.1,2,1)", L.required_states(0.05, 0.1, 2, 1),
         math.ceil(log40 * 4 / 0.005), 2952, 0),
        ("required_states(0.1,0.05,1,10)", L.required_states(0.1, 0.05, 1, 10),
         math.ceil(math.log(800) / 0.02), 335, 0),
        ("theorem1_bound total", L.theorem1_bound(0.1, 0.1, 2, 1, eps_m=0.05).total,
         hoeff + 0.2 + 2 * (1 - 1.1**-2), 0.59711, 5),
        ("corollary1_epsilon(0.05,0.01,2)", L.corollary1_epsilon(0.05, 0.01, 2), 0.05 + 6 * 0.01,
         0.11, 2),
        ("cmave_zeta example", L.cmave_zeta(1, 0.9, 44, 100, 10**4, 0.1, 1.0),
         3 * (1 - 0.9**44) / 0.1 * log6000 / 1e4 + math.sqrt(2 * log6000 / 1e4) + tail,
         0.14131, 5),
        ("cmsve_zeta example", L.cmsve_zeta(1, 0.9, 44, 100, 10**4, 0.1, 1.0),
         3 * ((1 - 0.9**44) / 0.1) ** 2 * log6000 / 1e4 + math.sqrt(2 * log6000 / 1e4) + tail**2,
         None, 0),
        ("subexp_deviation(1,1,1e4,0.1)", L.subexp_deviation(1, 1, 10**4, 0.1),
         math.sqrt(2 * log40 / 1e4), 0.027162, 6),
        ("subexp sigma2", L.subexp_candidates(1, 1, 10**4, 0.1)[1], 2 * log40 / 1e4, 0.000738, 6),
        ("subexp_required_states(1,1,1,0.1)", L.subexp_required_states(1, 1, 1, 0.1),
         math.ceil(2 * log40), 8, 0),
    ]
    bad = [name for name, got, ref, _, _ in cases if not math.isclose(got, ref, rel_tol=1e-9)]
    printed_off = [f"{name} (printed {hand}, exact {ref:.6g})" for name, _, ref, hand, digits in cases
                   if hand is not None and abs(ref - hand) > 0.5 * 10**-digits + 1e-15]
    detail = f"{len(cases) - len(bad)}/{len(cases)} examples match exact evaluation to 1e-9"
    if bad:
        detail += f"; mismatched: {', '.join(bad)}"
    if printed_off:
        detail += f"; printed hand values with arithmetic slips: {'; '.join(printed_off)}"
    assert report(1, not bad, detail)


# 2 ------------------------------------------------------------------------


def test_criterion_2_clipped_triangle_fuzz(report):
    gen = np.random.default_rng(2)
    n = 10**6
    x = gen.normal(scale=10, size=n) * gen.choice([1e-3, 1, 1e3], size=n)
    y = gen.normal(scale=10, size=n) * gen.choice([1e-3, 1, 1e3], size=n)
    c = gen.exponential(5, size=n)
    lhs = np.minimum(c, np.abs(x))
    rhs = np.minimum(c, np.abs(x - y)) + np.minimum(c, np.abs(y))
    violations = int(np.sum(lhs > rhs * (1 + 1e-12)))
    assert report(2, violations == 0, f"{violations} violations in {n} triples")


# 3 ------------------------------------------------------------------------


def test_criterion_3_stopping_coverage(report):
    eps, delta, tau, runs = 0.1, 0.05, 1.0, 200
    chain, _ = make_problem("deterministic-chain")
    table = np.zeros((chain.n_states, 2))
    table[:, RIGHT] = 1.0
    bern, bern_policy = make_problem("bernoulli", p=0.5)
    problems = {
        "deterministic": (chain, TabularPolicy(table), chain.make_state([0]), 0.9**4),
        "bernoulli(0.5)": (bern, bern_policy, bern.make_state([0]), 0.5),
        "uniform[0,1]": (uniform_return_env(), UniformPolicy(1),
                         uniform_return_env().make_state([0]), 0.5),
    }
    rates, worst = {}, 0.0
    for k, (name, (env, policy, s, truth)) in enumerate(problems.items()):
        misses = 0
        for i in range(runs):
            res = ebgstop_tau(env, policy, s, eps, delta, tau, rng=RngStream(30, (k, i)))
            misses += abs(res.value - truth) > eps * (abs(truth) + tau)
        rates[name] = misses / runs
        worst = max(worst, rates[name])
    detail = ", ".join(f"{n} {r:.3f}" for n, r in rates.items())
    detail += f" violation rate over {runs} runs (target <= {delta}, fail above 0.1)"
    assert report(3, worst <= 0.10, detail)


# 4 ------------------------------------------------------------------------


def test_criterion_4_pipeline_coverage(report):
    out = chain_coverage(0.3, 0.2, c=2.0, K=1, reps=100, seed=4)
    detail = (f"{out['violations']}/{out['reps']} violations (rate {out['rate']:.2f} vs "
              f"delta 0.2), max |err| {out['max_error']:.4f}, bound {out['bound']}")
    assert report(4, out["passed"], detail)


# 5 ------------------------------------------------------------------------


def test_criterion_5_truncation_bias(report):
    env = ring_chain(5, 0.9)
    policy = UniformPolicy(2)
    v = chain_true_values(env, policy)
    s = env.make_state([0])
    ok, parts = True, []
    for eps in (0.1, 0.01):
        plan = TruncationPlan.for_env(env, eps, 1.0)
        g, _ = sample_returns(env, policy, s, plan, RngStream(5, (int(1 / eps),)), 10**6)
        se = g.std(ddof=1) / math.sqrt(len(g))
        dev = abs(g.mean() - v[0])
        ok &= dev <= eps * 1.0 + 3 * se
        parts.append(f"eps={eps} l={plan.length} |dev|={dev:.5f} allowed={eps + 3 * se:.5f}")
    assert report(5, ok, "; ".join(parts))


# 6 ------------------------------------------------------------------------


def test_criterion_6_mountain_car_scaled(report):
    grid = ExperimentGrid(env="mountain-car", epsilons=(0.05, 0.1), deltas=(0.1,), m=20, seed=6)
    res = run_experiment(grid)
    med_05 = median_samples(res["summary"], 0.05, 0.1)
    med_10 = median_samples(res["summary"], 0.1, 0.1)
    ok = 1e2 <= med_10 <= 1e5 and med_05 > med_10
    exhausted = sum(c["exhausted"] for c in res["summary"])
    detail = f"median samples eps=0.1: {med_10:g}, eps=0.05: {med_05:g}; exhausted {exhausted}"
    assert report(6, ok, detail)


# 7 ------------------------------------------------------------------------


def test_criterion_7_bootstrap_gap(report):
    rows = oracle_compare("bernoulli", 10, 0.1, 0.1, 1.0, seed=7)
    ratios = np.array([r["ratio"] for r in rows if r["status"] == "ok"])
    ok = len(ratios) == len(rows) and np.all(ratios >= 1) and np.median(ratios) > 3
    detail = (f"{len(ratios)} states, ratio min {ratios.min():.1f}, median "
              f"{np.median(ratios):.1f}, max {ratios.max():.1f}")
    assert report(7, ok, detail)


# 8 ------------------------------------------------------------------------


def test_criterion_8_determinism(report, tmp_path):
    grid = ExperimentGrid(env="chain", m=20, seed=8)
    first = write_experiment(run_experiment(grid), grid, tmp_path / "a.csv")
    second = write_experiment(run_experiment(grid), grid, tmp_path / "b.csv")
    same = [a.read_bytes() == b.read_bytes() for a, b in zip(first, second)]
    assert report(8, all(same), f"{sum(same)}/{len(same)} output files byte-identical "
                                f"({len(grid.cells()[0])} cells, m=20)")


# 9 ------------------------------------------------------------------------


def test_criterion_9_cache_round_trip(report, tmp_path):
    from test_cache import random_cache

    gen = np.random.default_rng(9)
    equal = detected = 0
    for i in range(50):
        cache = random_cache(gen)
        path = tmp_path / f"c{i}.json"
        save_cache(cache, path)
        equal += load_cache(path) == cache
        raw = bytearray(path.read_bytes())
        raw[int(gen.integers(len(raw)))] ^= 1 << int(gen.integers(8))
        try:
            loads_cache(bytes(raw).decode())
        except (CacheError, UnicodeDecodeError):
            detected += 1
    assert report(9, equal == 50 and detected == 50,
                  f"{equal}/50 round trips equal, {detected}/50 corruptions detected")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
