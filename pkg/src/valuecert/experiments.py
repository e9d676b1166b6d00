"""Sample-count experiments, the bootstrap comparison and the chain coverage
check, each producing plain tables.

All randomness hangs off one master seed:

* ``(0,)`` start states,
* ``(2, cell, state)`` rollouts of grid cell ``cell``,
* ``(3, state)`` returns for the bootstrap comparison,
* ``(4, rep)`` prediction noise of coverage repetition ``rep``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import (
    BUDGET_EXHAUSTED,
    STATES_STREAM,
    build_cache,
    estimate_states,
    evaluate,
    exact_loss,
)
from .loss import LossSpec, CMAPVE
from .mdp import chain_true_values, sample_initial_states
from .problems import BENCHMARKS, make_problem
from .rng import RngStream
from .rollout import ReturnSampler, TruncationPlan
from .stopping import DEFAULT_MAX_SAMPLES, SampleBudgetExceeded, bootstrap_stopping, ebgstop

CELL_STREAM = 2
ORACLE_STREAM = 3
NOISE_STREAM = 4

DEFAULT_EPSILONS = (0.01, 0.05, 0.1)
DEFAULT_DELTAS = (0.01, 0.1)
LONG_EPSILON = 0.05  # benchmark cells below this need allow_long

ROW_FIELDS = ("env", "epsilon", "delta", "tau", "state_id", "samples", "steps", "status")
SUMMARY_FIELDS = ("env", "epsilon", "delta", "tau", "states", "min", "median", "max",
                  "exhausted")
ORACLE_FIELDS = ("env", "epsilon", "delta", "tau", "state_id", "samples_ebg",
                 "samples_bootstrap", "ratio", "status")


def fmt(x) -> str:
    """Shortest round-tripping text for a number; stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _table(fields, rows, meta: dict) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([fmt(row[f]) for f in fields])
    return buf.getvalue()


def _write(path, text: str):
    Path(path).write_bytes(text.encode())


@dataclass
class ExperimentGrid:
    env: str = "chain"
    epsilons: tuple = DEFAULT_EPSILONS
    deltas: tuple = DEFAULT_DELTAS
    tau: float = 1.0
    m: int = 100
    seed: int = 0
    allow_long: bool = False
    max_samples: int = DEFAULT_MAX_SAMPLES
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        for e in self.epsilons:
            if not 0 < e < 1:
                raise ValueError(f"epsilon {e} outside (0, 1)")
        for d in self.deltas:
            if not 0 < d < 1:
                raise ValueError(f"delta {d} outside (0, 1)")

    def cells(self) -> tuple[list, list]:
        """``(run, skipped)`` lists of (epsilon, delta) pairs in grid order."""
        run, skipped = [], []
        for eps in self.epsilons:
            for delta in self.deltas:
                long = self.env in BENCHMARKS and eps < LONG_EPSILON
                (skipped if long and not self.allow_long else run).append((eps, delta))
        return run, skipped

    def describe(self) -> dict:
        return {
            "env": self.env,
            "epsilons": " ".join(fmt(e) for e in self.epsilons),
            "deltas": " ".join(fmt(d) for d in self.deltas),
            "tau": fmt(self.tau),
            "m": self.m,
            "seed": self.seed,
            "allow_long": fmt(self.allow_long),
            "max_samples": self.max_samples,
            "params": json.dumps(self.params, sort_keys=True),
        }


def summarize(rows: list[dict]) -> list[dict]:
    """min/median/max of samples per cell, over states that finished."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r["env"], r["epsilon"], r["delta"], r["tau"]), []).append(r)
    out = []
    for (env, eps, delta, tau), group in cells.items():
        done = np.array([r["samples"] for r in group if r["status"] not in
                         (BUDGET_EXHAUSTED, "terminal")])
        exhausted = sum(r["status"] == BUDGET_EXHAUSTED for r in group)
        if done.size:
            lo, med, hi = int(done.min()), float(np.median(done)), int(done.max())
        else:
            lo, med, hi = 0, float("nan"), 0
        out.append({"env": env, "epsilon": eps, "delta": delta, "tau": tau,
                    "states": len(group), "min": lo, "median": med, "max": hi,
                    "exhausted": exhausted})
    return out


def run_experiment(grid: ExperimentGrid, *, n_jobs: int = 1, progress=None) -> dict:
    """Run the stopping rule on the same ``m`` start states for every cell.

    Returns ``{"rows", "summary", "skipped"}``; a state that runs out of
    budget is recorded with status ``budget-exhausted`` and the run goes on.
    """
    env, policy = make_problem(grid.env, **grid.params)
    states = sample_initial_states(env, grid.m, RngStream(grid.seed, (STATES_STREAM,)))
    run, skipped = grid.cells()
    rows = []
    for cell, (eps, delta) in enumerate(run):
        plan = TruncationPlan.for_env(env, eps, grid.tau)
        entries = estimate_states(env, policy, states, eps, delta, grid.tau, grid.seed,
                                  plan=plan, n_jobs=n_jobs, max_samples=grid.max_samples,
                                  stream=(CELL_STREAM, cell), record_budget=True)
        for e in entries:
            rows.append({"env": grid.env, "epsilon": eps, "delta": delta, "tau": grid.tau,
                         "state_id": e.state_id, "samples": e.samples, "steps": e.steps,
                         "status": e.case})
        if progress is not None:
            progress(eps, delta, entries)
    return {"rows": rows, "summary": summarize(rows), "skipped": skipped}


def write_experiment(result: dict, grid: ExperimentGrid, out) -> list[Path]:
    """Write ``out`` (one row per state), ``<out>.summary.csv`` and
    ``<out>.summary.json``; returns the paths written."""
    out = Path(out)
    meta = {"valuecert": __version__, "command": "experiment", **grid.describe()}
    if result["skipped"]:
        meta["skipped_cells"] = " ".join(f"{fmt(e)}/{fmt(d)}" for e, d in result["skipped"])
    summary_csv = out.with_name(out.name + ".summary.csv")
    summary_json = out.with_name(out.name + ".summary.json")
    _write(out, _table(ROW_FIELDS, result["rows"], meta))
    _write(summary_csv, _table(SUMMARY_FIELDS, result["summary"], meta))
    doc = {"meta": meta, "cells": result["summary"],
           "skipped": [list(c) for c in result["skipped"]]}
    _write(summary_json, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return [out, summary_csv, summary_json]


# -- bootstrap comparison ---------------------------------------------------


class _PrefixedDraw:
    """Replays ``prefix`` and then continues with fresh draws."""

    def __init__(self, prefix, prefix_steps, sampler):
        self.prefix, self.prefix_steps, self.sampler = prefix, prefix_steps, sampler
        self.pos = 0

    def __call__(self, n):
        take = min(n, len(self.prefix) - self.pos)
        g = self.prefix[self.pos:self.pos + take]
        st = self.prefix_steps[self.pos:self.pos + take]
        self.pos += take
        if take < n:
            g2, st2 = self.sampler(n - take)
            g, st = np.concatenate([g, g2]), np.concatenate([st, st2])
        return g, st


def oracle_compare(env_name: str, n_states: int, eps: float, delta: float, tau: float = 1.0,
                   *, batch: int = 100_000, min_batch: int = 1000, k: int = 1000,
                   seed: int = 0, params: dict | None = None,
                   max_samples: int = DEFAULT_MAX_SAMPLES) -> list[dict]:
    """Samples needed by the stopping rule versus the bootstrap variant.

    Each state gets ``batch`` pre-drawn returns.  The bootstrap variant reads
    its intervals off that batch and consumes it as its stream; the stopping
    rule sees the same batch first and keeps drawing from the same stream if
    it needs more.
    """
    if batch < min_batch:
        raise ValueError(f"batch size {batch} is below the minimum {min_batch}")
    env, policy = make_problem(env_name, **(params or {}))
    states = sample_initial_states(env, n_states, RngStream(seed, (STATES_STREAM,)))
    plan = TruncationPlan.for_env(env, eps, tau)
    rows = []
    for i, s in enumerate(states):
        row = {"env": env_name, "epsilon": eps, "delta": delta, "tau": tau, "state_id": i}
        if s.terminal:
            rows.append({**row, "samples_ebg": 0, "samples_bootstrap": 0,
                         "ratio": float("nan"), "status": "terminal"})
            continue
        stream = RngStream(seed, (ORACLE_STREAM, i))
        sampler = ReturnSampler(env, policy, s, plan, stream)
        pre, pre_steps = sampler(batch)
        status = "ok"
        try:
            boot = bootstrap_stopping(pre, pre, eps, delta, tau, k=k,
                                      rng=stream.child(0).generator()).samples
        except SampleBudgetExceeded:
            boot, status = batch, "bootstrap-exhausted"
        try:
            ebg = ebgstop(_PrefixedDraw(pre, pre_steps, sampler), eps, delta, tau,
                          env.spec.vmax, max_samples=max_samples).samples
        except SampleBudgetExceeded as err:
            ebg, status = err.samples, BUDGET_EXHAUSTED
        rows.append({**row, "samples_ebg": ebg, "samples_bootstrap": boot,
                     "ratio": ebg / boot, "status": status})
    return rows


def write_oracle_compare(rows, out, meta: dict) -> Path:
    meta = {"valuecert": __version__, "command": "oracle-compare", **meta}
    _write(out, _table(ORACLE_FIELDS, rows, meta))
    return Path(out)


# -- chain coverage ---------------------------------------------------------


def chain_coverage(eps: float, delta: float, c: float = 2.0, K: int = 1, reps: int = 100,
                   *, tau: float = 1.0, noise: float = 0.5, seed: int = 0, gamma: float = 0.9,
                   n: int = 5, progress=None) -> dict:
    """Rebuild-and-evaluate repetitions on the random-walk chain.

    Each repetition builds a fresh cache, evaluates a prediction
    ``v* + U(-noise, noise)`` against it and compares the empirical loss with
    the exact loss under the state distribution (uniform over live states).
    """
    env, policy = make_problem("chain", gamma=gamma, n=n)
    v_true = chain_true_values(env, policy)
    live = ~env.terminal
    spec = LossSpec(CMAPVE, c=c, tau=tau)
    errors, bounds = [], []
    for r in range(reps):
        rep_seed = seed * 1_000_003 + r
        vhat = v_true + RngStream(seed, (NOISE_STREAM, r)).generator().uniform(
            -noise, noise, size=v_true.shape)
        exact = exact_loss(spec, vhat[live], v_true[live])
        cache = build_cache(env, policy, eps, delta, tau, c, K, seed=rep_seed)
        ids = [int(round(e.coords[0])) for e in cache.entries]
        predictions = {e.state_id: float(vhat[s]) for e, s in zip(cache.entries, ids)}
        report = evaluate(predictions, cache, spec)
        errors.append(abs(report.loss - exact))
        bounds.append(report.deviation_bound)
        if progress is not None:
            progress(r, errors[-1], bounds[-1])
    errors, bounds = np.array(errors), np.array(bounds)
    violations = int(np.sum(errors > bounds))
    return {"epsilon": eps, "delta": delta, "c": c, "K": K, "tau": tau, "reps": reps,
            "violations": violations, "rate": violations / reps,
            "max_error": float(errors.max()), "mean_error": float(errors.mean()),
            "bound": float(bounds[0]), "passed": violations / reps <= delta}


def coverage_grid(epsilons=(0.2, 0.3), deltas=(0.1, 0.2), **kwargs) -> list[dict]:
    return [chain_coverage(e, d, **kwargs) for e in epsilons for d in deltas]


def median_samples(summary: list[dict], eps: float, delta: float) -> float:
    for cell in summary:
        if math.isclose(cell["epsilon"], eps) and math.isclose(cell["delta"], delta):
            return cell["median"]
    raise KeyError((eps, delta))
