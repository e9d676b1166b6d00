"""Follow the stopping rule's confidence interval on a Bernoulli(0.3) stream.

Prints the running bounds at each schedule epoch and the reason it stopped.
"""
import numpy as np

from valuecert import ebgstop

gen = np.random.default_rng(3)


def draw(n):
    g = (gen.random(n) < 0.3).astype(float)
    return g, np.ones(n, dtype=np.int64)


def show(state):
    # called once per schedule epoch with the live state
    print(f"j={state.acc.count:>8d} mean={state.acc.mean:.4f} "
          f"interval=[{state.lb_signed:.4f}, {state.ub_signed:.4f}]")


res = ebgstop(draw, eps=0.05, delta=0.05, tau=1.0, vmax=1.0, callback=show)
print(f"stopped after {res.samples} samples ({res.case}); estimate {res.value:.4f}, truth 0.3")
