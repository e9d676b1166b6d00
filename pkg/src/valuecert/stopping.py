"""Stopping rules that turn a stream of sampled returns into a value estimate.

``ebgstop`` is the empirical-Bernstein geometric stopping rule relaxed with an
absolute slack ``tau``: it stops once the estimate is within
``eps * (|mean| + tau)`` of the true mean with probability ``1 - delta``.
``fixed_budget_bernstein`` samples many states in lock-step until their
average Bernstein radius is small enough, and ``bootstrap_stopping`` is an
idealised reference that reads confidence intervals off a large pre-drawn
batch instead of a concentration inequality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

RELATIVE = "relative-width"
ABSOLUTE = "absolute-tau"
TERMINAL = "terminal"

DEFAULT_MAX_SAMPLES = 10**8


class SampleBudgetExceeded(RuntimeError):
    def __init__(self, samples: int, lb: float, ub: float, context: str = ""):
        self.samples, self.lb, self.ub, self.context = samples, lb, ub, context
        msg = f"sample budget exhausted after {samples} samples (LB={lb:.6g}, UB={ub:.6g})"
        super().__init__(f"{msg} {context}".strip())


class Welford:
    """Running mean and sum of squared deviations."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count: int = 0, mean: float = 0.0, m2: float = 0.0):
        self.count, self.mean, self.m2 = count, mean, m2

    def update(self, g: float) -> "Welford":
        self.count += 1
        delta = g - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (g - self.mean)
        return self

    @property
    def variance(self) -> float:
        """Biased (divide-by-count) variance."""
        return self.m2 / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    def __repr__(self):
        return f"Welford(count={self.count}, mean={self.mean!r}, m2={self.m2!r})"


def welford_update(acc: Welford, g: float) -> Welford:
    return acc.update(g)


def bernstein_radius(sigma: float, x: float, j: int, vmax: float) -> float:
    return sigma * math.sqrt(2.0 * x / j) + 3.0 * vmax * x / j


class GeometricSchedule:
    """Epoch bookkeeping for geometric checking.

    The confidence parameter ``x`` is only recomputed when the sample count
    reaches ``floor(beta**h)``.  Runs of ``h`` that share the same floor are
    skipped in one go, so each sample count recomputes ``x`` at most once.
    ``split`` is the constant in the per-epoch failure probability
    ``delta * (p - 1) / (split * p * h**p)``.
    """

    __slots__ = ("delta", "beta", "p", "split", "h", "alpha", "x", "next_check")

    def __init__(self, delta: float, beta: float = 1.1, p: float = 1.1, split: float = 3.0):
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if beta <= 1 or p <= 1:
            raise ValueError("beta and p must exceed 1")
        self.delta, self.beta, self.p, self.split = delta, beta, p, split
        self.h = 0
        self.alpha = 1.0
        self.x = 1.0
        self.next_check = 1

    def threshold(self, h: int) -> int:
        return math.floor(self.beta**h)

    def epoch_x(self, h: int, alpha: float) -> float:
        level = self.delta * (self.p - 1) / (self.split * self.p * h**self.p)
        assert 0 < level < 1, level
        return -alpha * math.log(level)

    def advance(self, j: int) -> bool:
        """Move past every threshold ``<= j``; True if ``x`` changed."""
        if j < self.next_check:
            return False
        h = self.h
        while self.threshold(h) <= j:
            h += 1
        self.h = h
        self.alpha = self.threshold(h) / self.threshold(h - 1)
        self.x = self.epoch_x(h, self.alpha)
        self.next_check = self.threshold(h)
        return True


def check_points(beta: float = 1.1, h_max: int = 50) -> list[int]:
    """Distinct sample counts ``floor(beta**h)`` for ``h = 0..h_max``."""
    out: list[int] = []
    for h in range(h_max + 1):
        t = math.floor(beta**h)
        if not out or t != out[-1]:
            out.append(t)
    return out


@dataclass
class EstimateResult:
    value: float
    samples: int
    case: str
    steps: int = 0
    lb: float = 0.0
    ub: float = math.inf


@dataclass
class StoppingState:
    """Running state of the tau-relaxed empirical-Bernstein stopping rule.

    ``lb``/``ub`` bound the absolute mean, ``lb_signed``/``ub_signed`` the
    signed mean.  Both pairs only ever tighten.
    """

    eps: float
    delta: float
    tau: float
    vmax: float
    beta: float = 1.1
    p: float = 1.1
    acc: Welford = field(default_factory=Welford)
    lb: float = 0.0
    ub: float = math.inf
    lb_signed: float = -math.inf
    ub_signed: float = math.inf
    schedule: GeometricSchedule = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.tau < 0 or self.vmax < 0:
            raise ValueError("tau and vmax must be non-negative")
        if self.schedule is None:
            self.schedule = GeometricSchedule(self.delta, self.beta, self.p, split=3.0)

    def update(self, g: float) -> str | None:
        """Absorb one return; report the termination case once reached."""
        acc = self.acc
        acc.update(g)
        j = acc.count
        sched = self.schedule
        if j >= sched.next_check:
            sched.advance(j)
        x = sched.x
        c = math.sqrt(max(acc.m2, 0.0) / j) * math.sqrt(2.0 * x / j) + 3.0 * self.vmax * x / j
        mean = acc.mean
        a = abs(mean)
        if a - c > self.lb:
            self.lb = a - c
        if a + c < self.ub:
            self.ub = a + c
        if mean - c > self.lb_signed:
            self.lb_signed = mean - c
        if mean + c < self.ub_signed:
            self.ub_signed = mean + c
        eps, tau = self.eps, self.tau
        if (self.ub_signed - self.lb_signed) / 2.0 <= eps * tau:
            return ABSOLUTE
        if self.lb > 0 and (1 + eps) * self.lb + 2 * eps * tau >= (1 - eps) * self.ub:
            return RELATIVE
        return None

    def estimate(self, case: str) -> float:
        if case == ABSOLUTE:
            return (self.ub_signed + self.lb_signed) / 2.0
        sign = math.copysign(1.0, self.acc.mean) if self.acc.mean != 0 else 0.0
        return sign / 2.0 * ((1 + self.eps) * self.lb + (1 - self.eps) * self.ub)


Draw = Callable[[int], tuple[np.ndarray, np.ndarray]]

# slots of the packed state handed to _scan
_J, _MEAN, _M2, _LB, _UB, _LBS, _UBS, _H, _ALPHA, _X, _NEXT = range(11)
_NONE, _ABS, _REL, _EPOCH = 0, 1, 2, 3


def _scan(g, st, eps, tau, vmax, delta, beta, p, split, stop_on_epoch):
    """Feed returns ``g`` through the stopping rule, updating ``st`` in place.

    Does exactly what ``StoppingState.update`` does, one return at a time,
    over a packed float array so it can be compiled.  Returns
    ``(consumed, code)``; with ``stop_on_epoch`` it also hands back control
    right after the schedule opens a new epoch.
    """
    j, mean, m2 = st[_J], st[_MEAN], st[_M2]
    lb, ub, lbs, ubs = st[_LB], st[_UB], st[_LBS], st[_UBS]
    h, alpha, x, next_check = st[_H], st[_ALPHA], st[_X], st[_NEXT]
    code = _NONE
    i = 0
    while i < g.shape[0]:
        v = g[i]
        i += 1
        j += 1.0
        d = v - mean
        mean += d / j
        m2 += d * (v - mean)
        epoch = False
        if j >= next_check:
            while math.floor(beta**h) <= j:
                h += 1.0
            alpha = math.floor(beta**h) / math.floor(beta ** (h - 1.0))
            x = -alpha * math.log(delta * (p - 1) / (split * p * h**p))
            next_check = math.floor(beta**h)
            epoch = True
        c = math.sqrt(max(m2, 0.0) / j) * math.sqrt(2.0 * x / j) + 3.0 * vmax * x / j
        a = abs(mean)
        if a - c > lb:
            lb = a - c
        if a + c < ub:
            ub = a + c
        if mean - c > lbs:
            lbs = mean - c
        if mean + c < ubs:
            ubs = mean + c
        if (ubs - lbs) / 2.0 <= eps * tau:
            code = _ABS
        elif lb > 0 and (1 + eps) * lb + 2 * eps * tau >= (1 - eps) * ub:
            code = _REL
        elif epoch and stop_on_epoch:
            code = _EPOCH
        if code != _NONE:
            break
    st[_J], st[_MEAN], st[_M2] = j, mean, m2
    st[_LB], st[_UB], st[_LBS], st[_UBS] = lb, ub, lbs, ubs
    st[_H], st[_ALPHA], st[_X], st[_NEXT] = h, alpha, x, next_check
    return i, code


try:
    import numba

    _scan = numba.njit(cache=True, nogil=True)(_scan)
except ImportError:  # pragma: no cover - plain Python fallback
    pass


def _pack(state: StoppingState) -> np.ndarray:
    s = state.schedule
    return np.array([state.acc.count, state.acc.mean, state.acc.m2, state.lb, state.ub,
                     state.lb_signed, state.ub_signed, s.h, s.alpha, s.x, s.next_check],
                    dtype=np.float64)


def _unpack(st: np.ndarray, state: StoppingState):
    acc, s = state.acc, state.schedule
    acc.count, acc.mean, acc.m2 = int(st[_J]), float(st[_MEAN]), float(st[_M2])
    state.lb, state.ub = float(st[_LB]), float(st[_UB])
    state.lb_signed, state.ub_signed = float(st[_LBS]), float(st[_UBS])
    s.h, s.alpha, s.x, s.next_check = int(st[_H]), float(st[_ALPHA]), float(st[_X]), int(st[_NEXT])


def ebgstop(
    draw: Draw,
    eps: float,
    delta: float,
    tau: float,
    vmax: float,
    *,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    callback: Callable[[StoppingState], None] | None = None,
    first_batch: int = 1024,
    max_batch: int = 65536,
) -> EstimateResult:
    """Run the stopping rule on returns produced by ``draw(n)``.

    ``draw`` returns ``(returns, steps)`` arrays of length ``n``; returns are
    consumed in order, so the result depends only on the concatenated stream.
    ``callback`` is invoked with the live state whenever the geometric
    schedule opens a new epoch.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    state = StoppingState(eps, delta, tau, vmax)
    sched = state.schedule
    st = _pack(state)
    args = (float(eps), float(tau), float(vmax), float(delta), float(sched.beta),
            float(sched.p), float(sched.split), callback is not None)
    total_steps = 0
    batch = first_batch
    code = _NONE
    j = 0
    while j < max_samples:
        n = min(batch, max_samples - j)
        returns, steps = draw(n)
        returns = np.ascontiguousarray(returns, dtype=np.float64)
        pos = 0
        while pos < n:
            used, code = _scan(returns[pos:], st, *args)
            total_steps += int(steps[pos:pos + used].sum())
            pos += used
            if code == _EPOCH:
                _unpack(st, state)
                callback(state)
                code = _NONE
            elif code != _NONE:
                break
        j = int(st[_J])
        if code != _NONE:
            break
        batch = min(2 * batch, max_batch)
    _unpack(st, state)
    if code == _NONE:
        raise SampleBudgetExceeded(j, state.lb, state.ub)
    case = ABSOLUTE if code == _ABS else RELATIVE
    return EstimateResult(state.estimate(case), j, case, total_steps, state.lb, state.ub)


def ebgstop_tau(env, policy, s, eps, delta, tau, vmax=None, plan=None, rng=0, **kwargs) -> EstimateResult:
    """Estimate the value of state ``s`` to relative accuracy ``eps`` with
    absolute slack ``tau`` and confidence ``1 - delta``."""
    from .rollout import ReturnSampler, TruncationPlan

    if s.terminal:
        return EstimateResult(0.0, 0, TERMINAL, 0, 0.0, 0.0)
    if plan is None:
        plan = TruncationPlan.for_env(env, eps, tau)
    vmax = env.spec.vmax if vmax is None else vmax
    return ebgstop(ReturnSampler(env, policy, s, plan, rng), eps, delta, tau, vmax, **kwargs)


# -- fixed budget -----------------------------------------------------------


@dataclass
class FixedBudgetResult:
    values: np.ndarray
    samples: np.ndarray
    sigmas: np.ndarray
    radii: np.ndarray
    rounds: int
    zeta: float
    steps: np.ndarray


def fixed_budget_rounds(
    draws: list[Draw],
    zeta: float,
    delta: float,
    vmax: float,
    *,
    terminal: np.ndarray | None = None,
    max_rounds: int = 10**7,
    chunk: int = 256,
) -> FixedBudgetResult:
    """Sample every state once per round until the mean Bernstein radius
    drops to ``zeta``.  Terminal states contribute a zero radius."""
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    m = len(draws)
    terminal = np.zeros(m, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
    live = np.flatnonzero(~terminal)
    sched = GeometricSchedule(delta, split=6.0 * m)
    mean = np.zeros(m)
    m2 = np.zeros(m)
    steps = np.zeros(m, dtype=np.int64)
    radii = np.zeros(m)
    buf = np.zeros((m, 0))
    buf_steps = np.zeros((m, 0), dtype=np.int64)
    pos = 0
    j = 0
    while j < max_rounds:
        if pos == buf.shape[1]:
            buf = np.zeros((m, chunk))
            buf_steps = np.zeros((m, chunk), dtype=np.int64)
            for i in live:
                buf[i], buf_steps[i] = draws[i](chunk)
            pos = 0
        g = buf[:, pos]
        steps += buf_steps[:, pos]
        pos += 1
        j += 1
        d = g - mean
        mean += d / j
        m2 += d * (g - mean)
        sched.advance(j)
        sigma = np.sqrt(np.maximum(m2, 0.0) / j)
        radii = sigma * math.sqrt(2 * sched.x / j) + 3 * vmax * sched.x / j
        radii[terminal] = 0.0
        if radii.mean() <= zeta:
            samples = np.where(terminal, 0, j)
            return FixedBudgetResult(mean.copy(), samples, sigma, radii, j, zeta, steps)
    raise SampleBudgetExceeded(j, float("nan"), float(radii.mean()), "in fixed-budget sampling")


def fixed_budget_bernstein(
    env, policy, states, eps, delta, K, loss, plan=None, rng=0, max_rounds=10**7
) -> FixedBudgetResult:
    """Fixed-state-count estimator for CMAVE/CMSVE/MAVE/MSVE.

    ``loss`` is a :class:`~valuecert.loss.LossSpec`; its kind decides the
    Bernstein range and the slack ``zeta`` left for the rollout error after
    the state-sampling term.  Raises ``ValueError`` when there is no slack.
    """
    from .loss import bernstein_range, fixed_budget_zeta
    from .rng import RngStream
    from .rollout import ReturnSampler, TruncationPlan

    m = len(states)
    if plan is None:
        # the truncation bias is paid out of zeta below
        plan = TruncationPlan.for_env(env, eps / 4, 1.0)
    zeta = fixed_budget_zeta(loss, eps, delta, K, m, env.spec, plan)
    vmax = bernstein_range(loss.kind, env.spec, plan)
    base = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    draws = [ReturnSampler(env, policy, s, plan, base.child(i)) for i, s in enumerate(states)]
    terminal = np.array([s.terminal for s in states])
    return fixed_budget_rounds(draws, zeta, delta, vmax, terminal=terminal, max_rounds=max_rounds)


# -- bootstrap reference ----------------------------------------------------


def bootstrap_interval(samples, j: int, k: int, pct: float, rng, center: float | None = None):
    """Bootstrap interval for ``|mean|`` after ``j`` samples.

    Draws ``k`` resamples of size ``j`` from ``samples``, takes the ``pct``
    and ``100 - pct`` percentiles of their means, and returns
    ``(|center| - c, |center| + c)`` where ``c`` is the larger distance from
    the bootstrap centre to either percentile.
    """
    if j < 1 or k < 1:
        raise ValueError("j and k must be positive")
    if not 0 < pct < 50:
        raise ValueError(f"percentile must lie in (0, 50), got {pct}")
    samples = np.asarray(samples, dtype=float)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    means = np.empty(k)
    per_chunk = max(1, 4_000_000 // j)
    for start in range(0, k, per_chunk):
        stop = min(k, start + per_chunk)
        idx = gen.integers(len(samples), size=(stop - start, j))
        means[start:stop] = samples[idx].mean(axis=1)
    lo, hi = np.percentile(means, [pct, 100 - pct])
    mid = float(samples.mean())
    c = max(mid - lo, hi - mid, 0.0)
    g = abs(mid if center is None else center)
    return g - c, g + c


def bootstrap_stopping(
    stream,
    batch,
    eps: float,
    delta: float,
    tau: float,
    *,
    k: int = 1000,
    rng=0,
    growth: float = 1.02,
) -> EstimateResult:
    """Same termination logic as ``ebgstop`` but with bootstrap intervals.

    ``stream`` is the sequence of returns the estimate is built from and
    ``batch`` the large pre-drawn sample acting as the empirical distribution.
    Intervals use the percentile ``100 * delta / 2`` and are recomputed at
    sample counts growing by ``growth`` (every sample while that is < 1).
    """
    stream = np.asarray(stream, dtype=float)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pct = 100.0 * delta / 2.0
    csum = np.cumsum(stream)
    lb, ub = 0.0, math.inf
    lbs, ubs = -math.inf, math.inf
    j = 1
    while j <= len(stream):
        mean = csum[j - 1] / j
        lo, hi = bootstrap_interval(batch, j, k, pct, gen, center=mean)
        c = (hi - lo) / 2.0
        lb, ub = max(lb, lo), min(ub, hi)
        lbs, ubs = max(lbs, mean - c), min(ubs, mean + c)
        if (ubs - lbs) / 2.0 <= eps * tau:
            return EstimateResult((ubs + lbs) / 2.0, j, ABSOLUTE, 0, lb, ub)
        if lb > 0 and (1 + eps) * lb + 2 * eps * tau >= (1 - eps) * ub:
            v = math.copysign(1.0, mean) / 2.0 * ((1 + eps) * lb + (1 - eps) * ub)
            return EstimateResult(v, j, RELATIVE, 0, lb, ub)
        j = max(j + 1, math.ceil(j * growth))
    raise SampleBudgetExceeded(len(stream), lb, ub, "bootstrap stream exhausted")
