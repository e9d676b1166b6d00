"""Building value caches and certifying learned value functions against them."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import loss as L
from .cache import CacheEntry, CacheMeta, ValueCache, load_cache, save_cache
from .mdp import Environment, sample_initial_states
from .rng import RngStream
from .rollout import TruncationPlan
from .stopping import (
    DEFAULT_MAX_SAMPLES,
    SampleBudgetExceeded,
    ebgstop_tau,
    fixed_budget_bernstein,
)

log = logging.getLogger(__name__)

# stream layout under the master seed
STATES_STREAM = 0
ROLLOUT_STREAM = 1


class CacheBuildError(RuntimeError):
    def __init__(self, state_id: int, coords, cause: Exception):
        self.state_id, self.coords = state_id, coords
        super().__init__(f"state {state_id} at {coords}: {cause}")


BUDGET_EXHAUSTED = "budget-exhausted"


def _estimate_one(args):
    (env, policy, state, state_id, eps, delta, tau, vmax, plan, seed, max_samples,
     stream, record_budget) = args
    rng = RngStream(seed, (*stream, state_id))
    try:
        res = ebgstop_tau(env, policy, state, eps, delta, tau, vmax, plan, rng,
                          max_samples=max_samples)
    except SampleBudgetExceeded as err:
        if not record_budget:
            raise CacheBuildError(state_id, state.coords, err) from err
        return CacheEntry(state_id, [float(c) for c in state.coords], float("nan"),
                          int(err.samples), BUDGET_EXHAUSTED, 0)
    return CacheEntry(state_id, [float(c) for c in state.coords], float(res.value),
                      int(res.samples), res.case, int(res.steps))


def _map(fn, jobs, n_jobs):
    if n_jobs == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def estimate_states(env, policy, states, eps, delta, tau, seed, *, vmax=None, plan=None,
                    n_jobs=1, max_samples=DEFAULT_MAX_SAMPLES, stream=(ROLLOUT_STREAM,),
                    record_budget=False) -> list[CacheEntry]:
    """Run the stopping rule on each state.

    State ``i`` draws from the stream ``(*stream, i)`` under ``seed``, so the
    result does not depend on ``n_jobs``.  With ``record_budget`` a state that
    hits ``max_samples`` is returned with case ``"budget-exhausted"`` and a
    NaN value instead of raising.
    """
    vmax = env.spec.vmax if vmax is None else vmax
    if plan is None:
        plan = TruncationPlan.for_env(env, eps, tau)
    jobs = [(env, policy, s, i, eps, delta, tau, vmax, plan, seed, max_samples,
             tuple(stream), record_budget)
            for i, s in enumerate(states)]
    return _map(_estimate_one, jobs, n_jobs)


def build_cache(
    env: Environment,
    policy,
    eps: float,
    delta: float,
    tau: float,
    c: float,
    K: int = 1,
    seed: int = 0,
    *,
    env_id: str | None = None,
    policy_id: str | None = None,
    n_jobs: int = 1,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    created: str | None = None,
) -> ValueCache:
    """Sample states and estimate their values so that the clipped relative
    loss of any predictor, measured on the cache, is within ``eps`` of its
    true expected loss with probability ``1 - delta`` over ``K`` queries."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if tau < 0 or c <= 0 or K < 1:
        raise ValueError("need tau >= 0, c > 0 and K >= 1")
    eps_m, eps_bar = L.split_epsilon(eps, c)
    m = L.required_states(eps_m, delta, c, K)
    per_state_delta = delta / (2 * m)
    states = sample_initial_states(env, m, RngStream(seed, (STATES_STREAM,)))
    plan = TruncationPlan.for_env(env, eps_bar, tau)
    log.info("building cache: m=%d eps_bar=%.6g delta/(2m)=%.3g", m, eps_bar, per_state_delta)
    entries = estimate_states(env, policy, states, eps_bar, per_state_delta, tau, seed,
                              plan=plan, n_jobs=n_jobs, max_samples=max_samples)
    meta = CacheMeta(
        env=env_id or env.spec.name,
        policy=policy_id or policy.spec.name,
        epsilon=eps, delta=delta, tau=tau, c=c, K=K,
        gamma=env.spec.gamma, vmax=env.spec.vmax, rmax=env.spec.rmax,
        seed=seed, m=m, loss_kind=L.CMAPVE, method="ebgstop", created=created,
        total_samples=int(sum(e.samples for e in entries)),
        extra={
            "eps_m": eps_m,
            "eps_bar": eps_bar,
            "per_state_delta": per_state_delta,
            "truncation": plan.mode,
            "truncation_length": plan.length,
        },
    )
    return ValueCache(meta, entries)


def build_cache_fixed_budget(
    env: Environment,
    policy,
    eps: float,
    delta: float,
    K: int,
    m: int | None,
    loss: L.LossSpec,
    seed: int = 0,
    *,
    plan: TruncationPlan | None = None,
    env_id: str | None = None,
    policy_id: str | None = None,
    created: str | None = None,
    max_rounds: int = 10**7,
) -> ValueCache:
    """Cache certified for an absolute loss (CMAVE, CMSVE, MAVE or MSVE).

    For the unclipped kinds the state count is fixed by the sub-exponential
    parameters and any ``m`` passed in is overridden.
    """
    if loss.kind == L.CMAPVE:
        raise ValueError("use build_cache for the clipped relative loss")
    if loss.kind in L.UNCLIPPED:
        forced = L.subexp_required_states(loss.alpha_se, loss.beta_se, K, delta)
        if m is not None and m != forced:
            log.warning("%s fixes m=%d; ignoring m=%d", loss.kind, forced, m)
        m = forced
    if m is None or m < 1:
        raise ValueError("a positive state count m is required for clipped losses")
    if plan is None:
        plan = TruncationPlan.for_env(env, eps / 4, 1.0)
    # fail fast on sizing before sampling anything
    L.fixed_budget_zeta(loss, eps, delta, K, m, env.spec, plan)
    states = sample_initial_states(env, m, RngStream(seed, (STATES_STREAM,)))
    res = fixed_budget_bernstein(env, policy, states, eps, delta, K, loss, plan=plan,
                                 rng=RngStream(seed, (ROLLOUT_STREAM,)), max_rounds=max_rounds)
    entries = [
        CacheEntry(i, [float(c) for c in s.coords], float(res.values[i]), int(res.samples[i]),
                   "terminal" if s.terminal else "fixed-budget", int(res.steps[i]))
        for i, s in enumerate(states)
    ]
    meta = CacheMeta(
        env=env_id or env.spec.name,
        policy=policy_id or policy.spec.name,
        epsilon=eps, delta=delta, tau=0.0, c=loss.c, K=K,
        gamma=env.spec.gamma, vmax=env.spec.vmax, rmax=env.spec.rmax,
        seed=seed, m=m, loss_kind=loss.kind, method="fixed-budget", created=created,
        total_samples=int(res.samples.sum()),
        extra={
            "zeta": res.zeta,
            "rounds": res.rounds,
            "mean_radius": float(res.radii.mean()),
            "alpha_se": loss.alpha_se,
            "beta_se": loss.beta_se,
            "truncation": plan.mode,
            "truncation_length": plan.length,
        },
    )
    return ValueCache(meta, entries)


def cache_loss_spec(cache: ValueCache) -> L.LossSpec:
    meta = cache.meta
    return L.LossSpec(meta.loss_kind, c=meta.c, tau=meta.tau,
                      alpha_se=meta.extra.get("alpha_se"), beta_se=meta.extra.get("beta_se"))


def evaluate(predictions, cache: ValueCache, spec: L.LossSpec | None = None, *,
             read_only: bool = False) -> L.ErrorReport:
    """Empirical loss of ``predictions`` on the cache with its certified bound.

    The query is counted against the cache's K budget unless ``read_only``;
    read-only reports are marked advisory.
    """
    default = cache_loss_spec(cache)
    spec = default if spec is None else spec
    if spec != default:
        raise ValueError(f"cache certifies {default}, not {spec}")
    meta = cache.meta
    if read_only:
        queries_before = cache.queries
        value = L.empirical_loss(predictions, cache, spec)
        cache.queries = queries_before
    else:
        value = L.empirical_loss(predictions, cache, spec)
    if meta.method == "ebgstop":
        b = L.theorem1_bound(meta.extra["eps_bar"], meta.delta, meta.c, meta.K, m=meta.m)
        breakdown = {"state_sampling": b.state_sampling, "rollout": b.rollout,
                     "normalizer": b.normalizer}
    else:
        sampling = L.state_sampling_term(spec, meta.m, meta.delta, meta.K)
        breakdown = {"state_sampling": sampling, "zeta": meta.epsilon - sampling}
    if read_only:
        certificate = "advisory"
    elif cache.budget_exhausted:
        L.warn_budget(cache.queries, meta.K)
        certificate = "void"
    else:
        certificate = "valid"
    return L.ErrorReport(
        kind=spec.kind, loss=value, deviation_bound=meta.epsilon, breakdown=breakdown,
        confidence=1 - meta.delta, queries_consumed=cache.queries, K=meta.K,
        certificate=certificate,
    )


def evaluate_file(predictions, path, spec=None, *, read_only=False) -> L.ErrorReport:
    """Evaluate against a cache file, persisting the usage counter."""
    cache = load_cache(path)
    report = evaluate(predictions, cache, spec, read_only=read_only)
    if not read_only:
        save_cache(cache, path)
    return report


def read_predictions(path) -> dict[int, float]:
    """Read ``state_id,value`` rows (CSV, ``#`` comments and a header allowed)
    or a JSON object / list of pairs."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        import json

        doc = json.loads(text)
        pairs = doc.items() if isinstance(doc, dict) else doc
        return {int(k): float(v) for k, v in pairs}
    out: dict[int, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sid, val = [p.strip() for p in line.split(",")[:2]]
        try:
            out[int(sid)] = float(val)
        except ValueError:
            if not out:  # header row
                continue
            raise
    return out


def exact_loss(spec: L.LossSpec, vhat, v_true, weights=None) -> float:
    """True expected loss over a finite state set (weights default to uniform)."""
    per_state = L.pointwise_loss(spec, vhat, v_true)
    w = np.full(len(per_state), 1 / len(per_state)) if weights is None else np.asarray(weights)
    return float(np.dot(w, per_state))

