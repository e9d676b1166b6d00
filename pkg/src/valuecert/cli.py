"""Command line: ``valuecert <subcommand> [flags]``.

Every flag can also come from an INI file passed with ``--config``.  Keys in
``[defaults]`` apply to every subcommand, keys in a section named after the
subcommand (``[build]``, ``[experiment]``, ...) override them, and keys in
``[env]`` are passed to the environment builder.  Flags on the command line
win over the file.  ``VALUECERT_VERBOSE`` (0, 1 or 2) sets the log level.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time

from . import __version__
from . import loss as L
from .cache import CacheError, load_cache, save_cache
from .estimator import (
    CacheBuildError,
    build_cache,
    build_cache_fixed_budget,
    evaluate,
    read_predictions,
)
from .experiments import (
    DEFAULT_DELTAS,
    DEFAULT_EPSILONS,
    ExperimentGrid,
    coverage_grid,
    oracle_compare,
    run_experiment,
    write_experiment,
    write_oracle_compare,
)
from .problems import PROBLEMS, make_problem
from .stopping import DEFAULT_MAX_SAMPLES

log = logging.getLogger("valuecert")


class UsageError(Exception):
    """Bad input that should exit with status 2."""


def _env_params(args) -> dict:
    params = dict(getattr(args, "env_params", {}) or {})
    for item in getattr(args, "param", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = value.strip()
    if getattr(args, "gamma", None) is not None:
        params["gamma"] = args.gamma
    return params


def _need(parser, args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        parser.error(f"the following arguments are required: {flags}")


# -- subcommands ------------------------------------------------------------


def cmd_build(args, parser) -> int:
    _need(parser, args, "env", "epsilon", "delta", "c", "out")
    env, policy = make_problem(args.env, **_env_params(args))
    t0 = time.perf_counter()
    cache = build_cache(env, policy, args.epsilon, args.delta, args.tau, args.c, args.K,
                        args.seed, env_id=args.env, n_jobs=args.n_jobs,
                        max_samples=args.max_samples)
    wall = time.perf_counter() - t0
    save_cache(cache, args.out)
    print(f"m={cache.meta.m} total_samples={cache.meta.total_samples} wall_time={wall:.2f}s")
    return 0


def cmd_build_fixed(args, parser) -> int:
    _need(parser, args, "env", "epsilon", "delta", "loss", "out")
    alpha, beta = args.alpha_se, args.beta_se
    if args.laplace_b is not None:
        alpha, beta = L.laplace_subexp_params(args.laplace_b)
    spec = L.LossSpec(args.loss, c=args.c, alpha_se=alpha, beta_se=beta)
    env, policy = make_problem(args.env, **_env_params(args))
    t0 = time.perf_counter()
    cache = build_cache_fixed_budget(env, policy, args.epsilon, args.delta, args.K, args.m,
                                     spec, args.seed, env_id=args.env)
    wall = time.perf_counter() - t0
    save_cache(cache, args.out)
    print(f"m={cache.meta.m} total_samples={cache.meta.total_samples} "
          f"rounds={cache.meta.extra['rounds']} wall_time={wall:.2f}s")
    return 0


def cmd_evaluate(args, parser) -> int:
    _need(parser, args, "cache", "predictions")
    cache = load_cache(args.cache)
    predictions = read_predictions(args.predictions)
    missing = [e.state_id for e in cache.entries if e.state_id not in predictions]
    if missing:
        raise UsageError(f"predictions missing for state ids: {' '.join(map(str, missing))}")
    report = evaluate(predictions, cache, read_only=args.read_only)
    if not args.read_only:
        save_cache(cache, args.cache)
    text = report.to_json(indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_experiment(args, parser) -> int:
    _need(parser, args, "env", "out")
    grid = ExperimentGrid(env=args.env, epsilons=tuple(args.epsilons), deltas=tuple(args.deltas),
                          tau=args.tau, m=args.m, seed=args.seed, allow_long=args.allow_long,
                          max_samples=args.max_samples, params=_env_params(args))
    make_problem(grid.env, **grid.params)  # fail on a bad name before any work
    run, skipped = grid.cells()
    for eps, delta in skipped:
        log.warning("skipping long cell epsilon=%s delta=%s (use --allow-long)", eps, delta)

    def progress(eps, delta, entries):
        log.info("cell epsilon=%s delta=%s done", eps, delta)

    result = run_experiment(grid, n_jobs=args.n_jobs, progress=progress)
    for path in write_experiment(result, grid, args.out):
        log.info("wrote %s", path)
    for cell in result["summary"]:
        print(f"epsilon={cell['epsilon']} delta={cell['delta']} median={cell['median']} "
              f"exhausted={cell['exhausted']}")
    return 0


def cmd_oracle_compare(args, parser) -> int:
    _need(parser, args, "env", "out")
    if args.batch < args.min_batch:
        raise UsageError(f"--batch {args.batch} is below the minimum {args.min_batch}")
    rows = oracle_compare(args.env, args.states, args.epsilon, args.delta, args.tau,
                          batch=args.batch, min_batch=args.min_batch, k=args.bootstrap_k,
                          seed=args.seed, params=_env_params(args),
                          max_samples=args.max_samples)
    meta = {"env": args.env, "states": args.states, "epsilon": args.epsilon,
            "delta": args.delta, "tau": args.tau, "batch": args.batch,
            "bootstrap_k": args.bootstrap_k, "seed": args.seed}
    write_oracle_compare(rows, args.out, meta)
    ratios = sorted(r["ratio"] for r in rows if r["status"] == "ok")
    if ratios:
        print(f"states={len(rows)} min_ratio={ratios[0]:.3g} "
              f"median_ratio={ratios[len(ratios) // 2]:.3g}")
    return 0


def cmd_validate(args, parser) -> int:
    results = coverage_grid(tuple(args.epsilons), tuple(args.deltas), c=args.c, K=args.K,
                            reps=args.reps, tau=args.tau, seed=args.seed)
    for r in results:
        verdict = "PASS" if r["passed"] else "FAIL"
        print(f"{verdict} epsilon={r['epsilon']} delta={r['delta']} "
              f"violations={r['violations']}/{r['reps']} max_error={r['max_error']:.4f} "
              f"bound={r['bound']}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0 if all(r["passed"] for r in results) else 1


# -- parser -----------------------------------------------------------------


def _add_env(p):
    p.add_argument("--env", choices=sorted(PROBLEMS), help="environment and policy")
    p.add_argument("--gamma", type=float, help="discount (chain environments)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="extra environment parameter, repeatable")


def _add_common(p, *, eps=None, delta=None):
    p.add_argument("--epsilon", type=float, default=eps)
    p.add_argument("--delta", type=float, default=delta)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-samples", type=int, default=DEFAULT_MAX_SAMPLES,
                   help="per-state sample ceiling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valuecert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a cache for the clipped relative loss")
    _add_env(p)
    _add_common(p)
    p.add_argument("--c", type=float, help="loss clip")
    p.add_argument("--K", type=int, default=1, help="number of queries to certify")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("build-fixed", help="build a cache for an absolute loss")
    _add_env(p)
    _add_common(p)
    p.add_argument("--loss", choices=[k for k in L.KINDS if k != L.CMAPVE])
    p.add_argument("--c", type=float)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--m", type=int, help="state count (fixed by the loss for MAVE/MSVE)")
    p.add_argument("--alpha-se", type=float)
    p.add_argument("--beta-se", type=float)
    p.add_argument("--laplace-b", type=float, help="set alpha/beta for Laplace(b) errors")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_fixed)

    p = sub.add_parser("evaluate", help="score predictions against a cache")
    p.add_argument("--cache")
    p.add_argument("--predictions", help="CSV of state_id,value or a JSON object")
    p.add_argument("--read-only", action="store_true",
                   help="do not count the query; the certificate is advisory")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="sample counts over an epsilon/delta grid")
    _add_env(p)
    p.add_argument("--epsilons", type=float, nargs="+", default=list(DEFAULT_EPSILONS))
    p.add_argument("--deltas", type=float, nargs="+", default=list(DEFAULT_DELTAS))
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-samples", type=int, default=DEFAULT_MAX_SAMPLES)
    p.add_argument("--allow-long", action="store_true",
                   help="run epsilon < 0.05 cells on the benchmarks")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("oracle-compare", help="stopping rule versus bootstrap sample counts")
    _add_env(p)
    _add_common(p, eps=0.1, delta=0.1)
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--batch", type=int, default=100_000, help="pre-drawn returns per state")
    p.add_argument("--min-batch", type=int, default=1000)
    p.add_argument("--bootstrap-k", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("validate", help="chain coverage of the cache guarantee")
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.2, 0.3])
    p.add_argument("--deltas", type=float, nargs="+", default=[0.1, 0.2])
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def _convert(action, value: str, section):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        return section.getboolean(action.dest) if section else value
    conv = action.type or str
    if action.nargs in ("+", "*"):
        return [conv(v) for v in value.replace(",", " ").split()]
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"config value {value!r} for {action.dest} not in {sorted(action.choices)}")
    return conv(value)


def apply_config(path, subparser, command: str) -> dict:
    """Turn the INI file into defaults for ``subparser``; returns env params."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for name in ("defaults", command):
        if not cp.has_section(name):
            continue
        section = cp[name]
        for key, value in section.items():
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("help", "func"):
                if name == command:
                    raise UsageError(f"unknown key {key!r} in [{name}] of {path}")
                continue
            try:
                defaults[dest] = _convert(actions[dest], value, section)
            except ValueError as err:
                raise UsageError(f"bad value for {key} in [{name}]: {err}") from err
    subparser.set_defaults(**defaults)
    return dict(cp["env"]) if cp.has_section("env") else {}


def _setup_logging():
    level = {0: logging.WARNING, 1: logging.INFO}.get(
        int(os.environ.get("VALUECERT_VERBOSE", "0") or 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    pre, _ = parser.parse_known_args(argv) if "--config" in " ".join(argv) else (None, None)
    env_params = {}
    if pre is not None and pre.config:
        subparser = parser._subparsers._group_actions[0].choices[pre.command]
        try:
            env_params = apply_config(pre.config, subparser, pre.command)
        except UsageError as err:
            parser.error(str(err))
    args = parser.parse_args(argv)
    args.env_params = env_params
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(args, sub)
    except UsageError as err:
        print(f"valuecert {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (CacheError, CacheBuildError, ValueError, RuntimeError, OSError) as err:
        print(f"valuecert {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
