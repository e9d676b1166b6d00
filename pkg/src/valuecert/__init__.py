"""High-confidence ground-truth value caches and certified value-error estimates."""
__version__ = "0.1.0"

from .rng import RngStream
from .mdp import (
    EnvSpec,
    Environment,
    State,
    TabularMDP,
    bernoulli_bandit,
    chain_true_values,
    deterministic_chain,
    env_step,
    random_walk_chain,
    ring_chain,
    sample_initial_states,
)
from .policies import EnergyPumpingPolicy, PolicySpec, TabularPolicy, UniformPolicy, policy_sample
from .benchmarks import MountainCar, PuddleWorld
from .rollout import TruncationPlan, sample_return, sample_returns, truncation_length
from .stopping import (
    EstimateResult,
    SampleBudgetExceeded,
    Welford,
    bernstein_radius,
    bootstrap_interval,
    bootstrap_stopping,
    ebgstop,
    ebgstop_tau,
    fixed_budget_bernstein,
)
from .loss import ErrorReport, LossSpec
from .cache import ValueCache, load_cache, save_cache
from .estimator import build_cache, build_cache_fixed_budget, evaluate

