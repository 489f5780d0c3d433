import csv
import json
import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliquemc import experiments as ex
from cliquemc import exact, graph_model
from cliquemc.errors import InvalidParameterError
from cliquemc.hamiltonian import GibbsWeightContext, identity_hamiltonian

SMALL = """\
schema_version = 1
name = small
n = 32, 48
alpha = 0.5
dynamics = metropolis, greedy
beta = 1.0
epsilon = none
gamma = 0.4
max_steps = 3000
trials = 3
master_seed = 17
baseline = top_k_degrees
"""


# --- parsing -------------------------------------------------------------------------


def test_parse_kv_comments_and_dashes():
    kv = ex.parse_kv("a = 1  # note\n\n# whole line\nmax-steps = 5\n")
    assert kv == {"a": "1", "max_steps": "5"}


@pytest.mark.parametrize("text", ["a = 1\na = 2", "no equals sign", "9bad = 1"])
def test_parse_kv_rejects(text):
    with pytest.raises(InvalidParameterError):
        ex.parse_kv(text)


def test_parse_beta_forms():
    assert ex.parse_beta("0", 64) == 0.0
    assert ex.parse_beta("inf", 64) == math.inf
    assert ex.parse_beta("ln(n)", 64) == pytest.approx(math.log(64))
    assert ex.parse_beta("0.5*ln(n)", 64) == pytest.approx(0.5 * math.log(64))
    assert ex.parse_beta("2 ln(n)", 64) == pytest.approx(2 * math.log(64))
    with pytest.raises(InvalidParameterError):
        ex.parse_beta("log(n)", 64)


def test_plan_requires_schema_version_and_known_keys():
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("n = 10\nk = 2\n")
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("schema_version = 2\nn = 10\nk = 2\n")
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("schema_version = 1\nn = 10\nk = 2\nspeed = fast\n")
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("schema_version = 1\nn = 10\nk = 2\nalpha = 0.5\n")
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("schema_version = 1\nn = 10\nk = 2\ndynamics = annealing\n")


def test_cells_grid_and_k_floor():
    plan = ex.ExperimentPlan.from_text(SMALL)
    cells = plan.cells()
    assert [(c["n"], c["dynamics"]) for c in cells] == [
        (32, "metropolis"), (32, "greedy"), (48, "metropolis"), (48, "greedy")
    ]
    assert [c["k"] for c in cells] == [5, 5, 6, 6]
    assert [c["cell"] for c in cells] == [0, 1, 2, 3]
    assert cells[0]["overlap_target"] == 2 and cells[0]["size_target"] is None
    assert len({c["config_hash"] for c in cells}) == 4


def test_standard_separation_plan():
    plan = ex.ExperimentPlan.from_text(ex.STANDARD_PLANS["separation"])
    cells = plan.cells()
    assert [c["k"] for c in cells] == [107, 107]
    assert cells[1]["beta"] == pytest.approx(math.log(512))
    assert plan.trials == 20 and plan.max_steps == 10_000_000 and plan.baseline


def test_tempering_needs_ladder():
    with pytest.raises(InvalidParameterError):
        ex.ExperimentPlan.from_text("schema_version = 1\nn = 16\nk = 2\ndynamics = simulated_tempering\n").cells()


# --- seeds --------------------------------------------------------------------------------


def test_derive_seed_matches_seed_sequence():
    want = np.random.SeedSequence(entropy=5, spawn_key=(2, 7)).generate_state(1, dtype=np.uint64)[0]
    assert ex.derive_seed(5, 2, 7) == int(want)
    assert ex.derive_seed(5, 2, 7) != ex.derive_seed(5, 7, 2)


@given(a=st.integers(0, 2**63), b=st.integers(0, 1000), c=st.integers(0, 1000))
def test_derive_seed_deterministic_and_in_range(a, b, c):
    s = ex.derive_seed(a, b, c)
    assert s == ex.derive_seed(a, b, c)
    assert 0 <= s < 2**64


def test_trial_uses_documented_seeds():
    plan = ex.ExperimentPlan.from_text(SMALL)
    cell = plan.cells()[2]
    row = ex.run_trial(cell, 1, plan.master_seed)
    seed = ex.derive_seed(17, 2, 1)
    assert row["seed"] == seed
    g = graph_model.generate(48, 6, seed)
    assert row["topk_overlap"] == graph_model.top_k_degrees(g).overlap


# --- ladder estimates ----------------------------------------------------------------------


def test_first_moment_log_z_by_exact_arithmetic():
    n, k, beta = 9, 3, 0.0
    want = sum(
        comb(k, r) * comb(n - k, q - r) * Fraction(2) ** (comb(r, 2) - comb(q, 2))
        for q in range(n + 1)
        for r in range(min(q, k) + 1)
    )
    got = ex.first_moment_log_z(n, k, beta, identity_hamiltonian(n))
    assert got == pytest.approx(math.log(want.numerator) - math.log(want.denominator), abs=1e-12)


def test_exact_ladder_matches_partition_function():
    plan = ex.ExperimentPlan.from_text(
        "schema_version = 1\nn = 12\nk = 4\ndynamics = simulated_tempering\nladder_betas = 0, ln(n)\n"
        "ladder_log_z = exact\n"
    )
    cell = plan.cells()[0]
    g = graph_model.generate(12, 4, 3)
    ladder = ex.build_ladder(cell, identity_hamiltonian(12), g)
    idx = exact.enumerate_cliques(g)
    want = exact.partition_functions(idx, GibbsWeightContext(math.log(12), identity_hamiltonian(12))).log_z
    assert ladder.log_z_hat[1] == pytest.approx(want)


# --- sweeps --------------------------------------------------------------------------------


def test_zero_trials_gives_valid_empty_outputs(tmp_path):
    plan = ex.ExperimentPlan.from_text(SMALL.replace("trials = 3", "trials = 0"))
    ex.run_sweep(plan, tmp_path)
    rows = list(csv.reader(open(tmp_path / "trials.csv")))
    assert rows == [ex.TRIAL_COLUMNS]
    cells = list(csv.DictReader(open(tmp_path / "cells.csv")))
    assert len(cells) == 4 and all(c["trials"] == "0" and c["hit_fraction_overlap"] == "" for c in cells)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["schema_version"] == 1 and len(s["cells"]) == 4


def test_outputs_identical_across_worker_counts(tmp_path):
    plan = ex.ExperimentPlan.from_text(SMALL)
    ex.run_sweep(plan, tmp_path / "one", workers=1)
    ex.run_sweep(plan, tmp_path / "two", workers=2)
    for name in ("trials.csv", "cells.csv", "summary.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    timing = json.loads((tmp_path / "two" / "timing.json").read_text())
    assert timing["workers"] == 2


def test_env_overrides_plan_workers(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    assert ex.resolve_workers(1) == 3
    monkeypatch.setenv(ex.WORKERS_ENV, "zero")
    with pytest.raises(InvalidParameterError):
        ex.resolve_workers(1)
    monkeypatch.delenv(ex.WORKERS_ENV)
    assert ex.resolve_workers(4) == 4


def test_unwritable_output_fails_before_any_trial(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")

    def boom(*a, **k):
        raise AssertionError("trial ran")

    monkeypatch.setattr(ex, "run_trial", boom)
    with pytest.raises(OSError):
        ex.run_sweep(ex.ExperimentPlan.from_text(SMALL), blocker / "out")


def test_censored_trials_lower_hit_fraction():
    cell = {"cell": 0, "n": 8, "k": 2, "dynamics": "metropolis", "beta": 0.0, "size_target": None,
            "overlap_target": 2, "max_steps": 10, "config_hash": "x"}
    base = {"first_hit_size": None, "final_size": 1, "topk_overlap": None}
    rows = [dict(base, first_hit_overlap=v) for v in (4, None, 8, None)]
    agg = ex.aggregate(cell, rows)
    assert agg["hit_fraction_overlap"] == 0.5
    assert agg["median_hit_overlap"] == 6
    assert agg["censored_overlap"] == 2
    assert agg["hit_fraction_size"] is None and agg["censored_size"] is None


def test_birth_death_and_tempering_cells_run(tmp_path):
    plan = ex.ExperimentPlan.from_text(
        "schema_version = 1\nn = 64\nk = 8\ndynamics = birth_death_1d, birth_death_2d, simulated_tempering\n"
        "beta = 1\nepsilon = 0\nmax_steps = 20000\ntrials = 2\nladder_betas = 0, 1\n"
    )
    res = ex.run_sweep(plan, tmp_path)
    assert len(res.rows) == 6
    assert all(r["steps_run"] > 0 for r in res.rows)
    assert res.summaries[0]["hit_fraction_overlap"] is None


def test_infinite_beta_runs_greedy():
    plan = ex.ExperimentPlan.from_text("schema_version = 1\nn = 40\nk = 6\nbeta = inf\nmax_steps = 2000\n")
    row = ex.run_trial(plan.cells()[0], 0, 0)
    assert row["dynamics"] == "greedy" and row["removals"] == 0
