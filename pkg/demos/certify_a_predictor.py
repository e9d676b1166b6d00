"""Compare two value predictors on the random-walk chain with one cache.

Builds a small cache (eps=0.5, so it takes a couple of seconds), then scores
a good and a poor predictor.  The cache is certified for K=2 queries, so both
reports carry a valid certificate.  A third query would void it.
"""
import numpy as np

from valuecert import build_cache, chain_true_values, evaluate
from valuecert.problems import make_problem

env, policy = make_problem("chain")
v = chain_true_values(env, policy)
print("exact values of live states 1..5:", np.round(v[1:6], 4))

cache = build_cache(env, policy, eps=0.5, delta=0.2, tau=1.0, c=2.0, K=2, seed=0)
print(f"cache: m={cache.meta.m} states, {cache.meta.total_samples} returns drawn")

ids = [int(e.coords[0]) for e in cache.entries]
gen = np.random.default_rng(1)
good = v + gen.uniform(-0.05, 0.05, v.shape)
poor = np.zeros_like(v)

for name, vhat in (("good", good), ("all-zero", poor)):
    rep = evaluate({i: vhat[s] for i, s in enumerate(ids)}, cache)
    print(f"{name:9s} loss={rep.loss:.4f} +/- {rep.deviation_bound} "
          f"at confidence {rep.confidence:.2f} ({rep.certificate})")
