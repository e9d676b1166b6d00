"""Value-error losses, their empirical estimates, and the closed-form bounds
that certify them."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

CMAPVE = "CMAPVE"
CMAVE = "CMAVE"
CMSVE = "CMSVE"
MAVE = "MAVE"
MSVE = "MSVE"
CLIPPED = (CMAPVE, CMAVE, CMSVE)
UNCLIPPED = (MAVE, MSVE)
SQUARED = (CMSVE, MSVE)
KINDS = CLIPPED + UNCLIPPED


class RegimeIndeterminate(ValueError):
    """The two sub-exponential deviation candidates straddle alpha**2 * beta."""


@dataclass(frozen=True)
class LossSpec:
    kind: str
    c: float | None = None
    tau: float = 0.0
    alpha_se: float | None = None
    beta_se: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in CLIPPED and not (self.c is not None and self.c > 0):
            raise ValueError(f"{self.kind} needs a clip c > 0")
        if self.kind in UNCLIPPED and not (
            self.alpha_se and self.beta_se and self.alpha_se > 0 and self.beta_se > 0
        ):
            raise ValueError(f"{self.kind} needs sub-exponential parameters alpha_se, beta_se > 0")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")


def clipped_relative_loss(vhat, v, tau: float, c: float):
    """``min(c, |vhat - v| / (|v| + tau))``; works elementwise on arrays."""
    vhat = np.asarray(vhat, dtype=float)
    v = np.asarray(v, dtype=float)
    denom = np.abs(v) + tau
    if np.any(denom == 0):
        raise ValueError("relative loss is undefined for v = 0 with tau = 0")
    out = np.minimum(c, np.abs(vhat - v) / denom)
    return float(out) if out.ndim == 0 else out


def pointwise_loss(spec: LossSpec, vhat, v) -> np.ndarray:
    vhat = np.asarray(vhat, dtype=float)
    v = np.asarray(v, dtype=float)
    if spec.kind == CMAPVE:
        return np.asarray(clipped_relative_loss(vhat, v, spec.tau, spec.c))
    err = np.abs(vhat - v)
    if spec.kind in SQUARED:
        err = err**2
    if spec.kind in CLIPPED:
        err = np.minimum(spec.c, err)
    return err


def empirical_loss(predictions, cache, spec: LossSpec) -> float:
    """Mean per-state loss of ``predictions`` against the cached values.

    ``predictions`` maps state id to predicted value.  Each call counts as one
    query against the cache's K budget.
    """
    ids = [e.state_id for e in cache.entries]
    missing = [i for i in ids if i not in predictions]
    if missing:
        raise KeyError(f"predictions missing for state ids {missing}")
    vhat = np.array([predictions[i] for i in ids], dtype=float)
    v = np.array([e.value for e in cache.entries], dtype=float)
    cache.record_query()
    return float(pointwise_loss(spec, vhat, v).mean())


# -- sizing and bounds ------------------------------------------------------


def hoeffding_term(m: int, delta: float, c: float, K: int = 1) -> float:
    """Deviation of a mean of ``m`` losses in [0, c], union-bounded over K queries."""
    return math.sqrt(math.log(4 * K / delta) * c**2 / (2 * m))


def required_states(eps_m: float, delta: float, c: float, K: int = 1) -> int:
    if eps_m <= 0 or not 0 < delta < 1 or c <= 0 or K < 1:
        raise ValueError("need eps_m > 0, 0 < delta < 1, c > 0 and K >= 1")
    return math.ceil(math.log(4 * K / delta) * c**2 / (2 * eps_m**2))


class BoundBreakdown(NamedTuple):
    state_sampling: float
    rollout: float
    normalizer: float

    @property
    def total(self) -> float:
        return self.state_sampling + self.rollout + self.normalizer


def theorem1_bound(eps: float, delta: float, c: float, K: int = 1, m: int | None = None,
                   eps_m: float | None = None) -> BoundBreakdown:
    """Three-term deviation bound for the clipped relative loss.

    ``eps`` is the accuracy of each cached value; pass either the state count
    ``m`` or the state-sampling accuracy ``eps_m`` used to size it.
    """
    if m is None:
        if eps_m is None:
            raise ValueError("pass m or eps_m")
        m = required_states(eps_m, delta, c, K)
    return BoundBreakdown(
        hoeffding_term(m, delta, c, K), 2 * eps, c * (1 - (1 + eps) ** -2)
    )


def corollary1_epsilon(eps_m: float, eps_bar: float, c: float) -> float:
    """Total accuracy from the state-sampling and per-state accuracies."""
    return eps_m + 2 * (1 + c) * eps_bar


def split_epsilon(eps: float, c: float) -> tuple[float, float]:
    """Split a target accuracy evenly between state sampling and the cached
    values, so that ``corollary1_epsilon(*split_epsilon(eps, c), c) == eps``."""
    return eps / 2, eps / (4 * (1 + c))


def _range_and_tail(rmax, gamma, l, vmax):
    if gamma >= 1:
        if vmax is None:
            raise ValueError("episodic (gamma = 1) bounds need vmax")
        return vmax, 0.0
    return rmax * (1 - gamma**l) / (1 - gamma), rmax * gamma**l / (1 - gamma)


def cmave_zeta(rmax, gamma, l, m, n, delta, mean_sigma, vmax=None) -> float:
    """Per-state rollout error allowance for clipped MAVE with ``n`` rollouts each."""
    rng_, tail = _range_and_tail(rmax, gamma, l, vmax)
    log_term = math.log(6 * m / delta)
    return 3 * rng_ * log_term / n + mean_sigma * math.sqrt(2 * log_term / n) + tail


def cmsve_zeta(rmax, gamma, l, m, n, delta, mean_sigma, vmax=None) -> float:
    rng_, tail = _range_and_tail(rmax, gamma, l, vmax)
    log_term = math.log(6 * m / delta)
    return 3 * rng_**2 * log_term / n + mean_sigma * math.sqrt(2 * log_term / n) + tail**2


def subexp_candidates(alpha_se, beta_se, m, delta, K=1) -> tuple[float, float]:
    log_term = math.log(4 * K / delta)
    return alpha_se * math.sqrt(2 * log_term / m), 2 * log_term / (beta_se * m)


def subexp_deviation(alpha_se, beta_se, m, delta, K=1) -> float:
    """Deviation of a mean of ``m`` sub-exponential losses at confidence
    ``1 - delta/2`` over K queries.

    Picks the gaussian-tail candidate when both candidates are at most
    ``alpha_se**2 * beta_se`` and the exponential-tail one when both exceed it.
    """
    if alpha_se <= 0 or beta_se <= 0:
        raise ValueError("sub-exponential parameters must be positive")
    s1, s2 = subexp_candidates(alpha_se, beta_se, m, delta, K)
    edge = alpha_se**2 * beta_se
    if s1 <= edge and s2 <= edge:
        return s1
    if s1 > edge and s2 > edge:
        return s2
    raise RegimeIndeterminate(
        f"sigma1={s1:.6g} and sigma2={s2:.6g} straddle alpha^2*beta={edge:.6g}"
    )


def subexp_required_states(alpha_se, beta_se, K, delta) -> int:
    return math.ceil(2 * math.log(4 * K / delta) / (alpha_se**2 * beta_se**2))


def laplace_subexp_params(b: float) -> tuple[float, float]:
    """Sub-exponential (alpha, beta) valid for a Laplace(mu, b) variable."""
    return b * math.sqrt(5.12), math.sqrt(0.9) / b


def state_sampling_term(spec: LossSpec, m: int, delta: float, K: int = 1) -> float:
    if spec.kind in UNCLIPPED:
        return subexp_deviation(spec.alpha_se, spec.beta_se, m, delta, K)
    return hoeffding_term(m, delta, spec.c, K)


def bernstein_range(kind: str, env_spec, plan) -> float:
    """Range used by the fixed-budget Bernstein radius for this loss kind."""
    if plan.mode == "discounted":
        r = env_spec.rmax * (1 - env_spec.gamma**plan.length) / (1 - env_spec.gamma)
    else:
        r = env_spec.vmax
    return r**2 if kind in SQUARED else r


def truncation_bias(kind: str, env_spec, plan) -> float:
    if plan.mode != "discounted":
        return 0.0
    b = env_spec.rmax * env_spec.gamma**plan.length / (1 - env_spec.gamma)
    return b**2 if kind in SQUARED else b


def fixed_budget_zeta(spec: LossSpec, eps, delta, K, m, env_spec, plan) -> float:
    """Slack left for rollout error once state sampling and truncation are paid for."""
    if spec.kind == CMAPVE:
        raise ValueError("CMAPVE caches are built with the adaptive stopping rule")
    zeta = eps - state_sampling_term(spec, m, delta, K) - truncation_bias(spec.kind, env_spec, plan)
    if zeta <= 0:
        hint = ""
        if spec.kind in CLIPPED:
            hint = f"; need m > {required_states(eps, delta, spec.c, K)} states"
        raise ValueError(f"no slack left for rollout error (zeta={zeta:.6g}) with m={m}{hint}")
    return zeta


# -- reporting --------------------------------------------------------------


@dataclass
class ErrorReport:
    """An empirical loss and the deviation bound certifying it.

    ``certificate`` is ``"valid"``, ``"void"`` once the cache's K budget is
    exceeded, or ``"advisory"`` when the query was not recorded.
    """

    kind: str
    loss: float
    deviation_bound: float
    breakdown: dict = field(default_factory=dict)
    confidence: float = 0.0
    queries_consumed: int = 0
    K: int = 1
    certificate: str = "valid"

    @property
    def voided(self) -> bool:
        return self.certificate == "void"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def warn_budget(used: int, K: int):
    warnings.warn(
        f"cache queried {used} times but certified for K={K}; certificate voided",
        RuntimeWarning,
        stacklevel=3,
    )
