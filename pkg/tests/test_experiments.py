import json
import math

import pytest

from valuecert.experiments import (
    ExperimentGrid,
    chain_coverage,
    median_samples,
    oracle_compare,
    run_experiment,
    summarize,
    write_experiment,
    write_oracle_compare,
)


def small_grid(**kw):
    base = dict(env="chain", epsilons=(0.2, 0.4), deltas=(0.1,), m=8, seed=3)
    return ExperimentGrid(**{**base, **kw})


def test_grid_cells_and_long_skip():
    run, skipped = ExperimentGrid(env="mountain-car").cells()
    assert skipped == [(0.01, 0.01), (0.01, 0.1)]
    assert run == [(0.05, 0.01), (0.05, 0.1), (0.1, 0.01), (0.1, 0.1)]
    run, skipped = ExperimentGrid(env="mountain-car", allow_long=True).cells()
    assert len(run) == 6 and not skipped
    # tabular chains are never skipped
    assert not ExperimentGrid(env="chain").cells()[1]


@pytest.mark.parametrize("kw", [dict(m=0), dict(tau=-1), dict(epsilons=(1.0,)), dict(deltas=(0,))])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        small_grid(**kw)


def test_run_rows_and_summary():
    res = run_experiment(small_grid())
    assert len(res["rows"]) == 16
    assert [(c["epsilon"], c["delta"]) for c in res["summary"]] == [(0.2, 0.1), (0.4, 0.1)]
    for cell in res["summary"]:
        assert cell["min"] <= cell["median"] <= cell["max"]
    assert median_samples(res["summary"], 0.2, 0.1) > median_samples(res["summary"], 0.4, 0.1)


def test_summary_skips_exhausted_and_terminal_states():
    rows = [dict(env="e", epsilon=0.1, delta=0.1, tau=1.0, samples=n, status=s)
            for n, s in [(10, "relative-width"), (30, "absolute-tau"), (99, "budget-exhausted"),
                         (0, "terminal")]]
    (cell,) = summarize(rows)
    assert (cell["min"], cell["median"], cell["max"], cell["exhausted"]) == (10, 20.0, 30, 1)
    (cell,) = summarize(rows[2:])
    assert math.isnan(cell["median"])


def test_budget_exhaustion_is_reported_not_raised():
    res = run_experiment(small_grid(epsilons=(0.05,), max_samples=50))
    assert res["summary"][0]["exhausted"] > 0


def test_outputs_are_byte_identical(tmp_path):
    grid = small_grid()
    paths_a = write_experiment(run_experiment(grid), grid, tmp_path / "a.csv")
    paths_b = write_experiment(run_experiment(grid), grid, tmp_path / "b.csv")
    for a, b in zip(paths_a, paths_b):
        assert a.read_bytes() == b.read_bytes()
    text = paths_a[0].read_text()
    assert text.startswith("# valuecert:") and "env,epsilon,delta,tau,state_id" in text
    doc = json.loads(paths_a[2].read_text())
    assert doc["meta"]["m"] == 8 and len(doc["cells"]) == 2


def test_oracle_compare_rows(tmp_path):
    rows = oracle_compare("bernoulli", 3, 0.1, 0.1, batch=2000, min_batch=1000, k=200)
    assert len(rows) == 3
    assert all(r["samples_ebg"] >= r["samples_bootstrap"] for r in rows if r["status"] == "ok")
    path = write_oracle_compare(rows, tmp_path / "o.csv", {"env": "bernoulli"})
    assert len([ln for ln in path.read_text().splitlines() if not ln.startswith("#")]) == 4
    with pytest.raises(ValueError, match="minimum"):
        oracle_compare("bernoulli", 1, 0.1, 0.1, batch=10)


def test_chain_coverage_small():
    out = chain_coverage(0.5, 0.2, reps=3, seed=1)
    assert out["reps"] == 3 and out["bound"] == 0.5
    assert 0 <= out["mean_error"] <= out["max_error"]
    assert (out["violations"] > 0) == (out["max_error"] > 0.5)
