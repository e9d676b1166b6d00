"""How many more returns the Bernstein rule needs than a bootstrap rule.

The bootstrap rule has no guarantee; the gap is the price of one.
"""
import numpy as np

from valuecert.experiments import oracle_compare

rows = oracle_compare("bernoulli", 5, 0.1, 0.1, 1.0, batch=20_000, seed=0)
for r in rows:
    print(f"state {r['state_id']}: bernstein {r['samples_ebg']:>7d}  "
          f"bootstrap {r['samples_bootstrap']:>6d}  ratio {r['ratio']:.1f}")
print("median ratio:", np.median([r["ratio"] for r in rows]))
