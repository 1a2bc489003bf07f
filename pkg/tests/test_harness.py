import csv
import json
import math
import os

import numpy as np
import pytest

from dasha_pp.data import fixture_path
from dasha_pp.errors import AllRunsDiverged, ConfigError
from dasha_pp.harness import (
    CSV_HEADER,
    ExperimentConfig,
    build_problem,
    estimate_f_star,
    load_config,
    parse_config,
    rounds_to_threshold,
    run_experiment,
    setup,
    slowdown_ratio,
    tune_gamma,
)

SMALL = """
[problem]
synthetic = 3, 8, 10
data_seed = 0

[participation]
kind = snice
s = 2

[compressor]
kind = randk
k = 2

[variant]
name = gradient

[run]
rounds = 200
seeds = 0, 1
gamma = theory
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_example_config():
    cfg = load_config(fixture_path("example.ini"))
    assert cfg.variant == "page" and cfg.participation == "snice" and cfg.s == 5
    assert cfg.seeds == (0, 1) and cfg.gamma == "theory"


def test_parse_numeric_gamma_and_defaults():
    cfg = parse_config("[run]\ngamma = 0.25\n")
    assert cfg.gamma == 0.25 and cfg.variant == "gradient"
    assert len(cfg.gamma_grid()) == 21


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[run]\nbogus = 1\n",
    "[run]\nrounds = many\n",
    "[run]\nseeds =\n",
    "[run]\ngamma = fast\n",
    "[variant]\nname = adam\n",
    "[problem]\nsynthetic = 1, 2\n",
    "no section header\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_theory_run_writes_csv(tmp_path):
    cfg = parse_config(SMALL)
    summary = run_experiment(cfg, str(tmp_path))
    assert len(summary["csv_files"]) == 2
    for path in summary["csv_files"]:
        rows = _rows(path)
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 201
        values = np.array(rows[1:], dtype=float)
        assert np.all(np.isfinite(values[:, 2])) and np.all(values[:, 2] >= 0)
        assert np.all(np.diff(values[:, 0]) == 1)
        # every participating node sends exactly K = 2 coordinates
        increments = np.diff(np.concatenate([[0.0], values[:, 3]]))
        np.testing.assert_allclose(increments, 2 * values[:, 4] / 3, rtol=1e-12)
    with open(tmp_path / "summary.json") as fh:
        saved = json.load(fh)
    assert saved["gamma"] == pytest.approx(summary["theory"]["gamma_max"])


def test_csv_deterministic(tmp_path):
    cfg = parse_config(SMALL)
    a = run_experiment(cfg, str(tmp_path / "a"))
    b = run_experiment(cfg, str(tmp_path / "b"))
    for pa, pb in zip(a["csv_files"], b["csv_files"]):
        with open(pa) as fa, open(pb) as fb:
            assert fa.read() == fb.read()


def test_grid_mode_runs_21_candidates(tmp_path):
    cfg = parse_config(SMALL.replace("rounds = 200", "rounds = 20").replace("gamma = theory", "gamma = grid")
                       .replace("seeds = 0, 1", "seeds = 3"))
    summary = run_experiment(cfg, str(tmp_path))
    assert len(summary["grid"]) == 21
    assert len(summary["csv_files"]) == sum(not g["diverged"] for g in summary["grid"])
    alive = [g for g in summary["grid"] if not g["diverged"]]
    assert summary["final_grad_norm_sq"] == min(g["final_grad_norm_sq"] for g in alive)


def test_tuning_skips_diverged():
    cfg = parse_config(SMALL.replace("kind = randk\nk = 2", "kind = identity")
                       .replace("data_seed = 0", "data_seed = 0\nloss = softmax"))
    su = setup(cfg)
    grid = [1e-2, 1e308]
    best, results = tune_gamma(su, [0], 30, grid=grid)
    assert [r.diverged for r in results] == [False, True]
    assert best.gamma == 1e-2
    with pytest.raises(AllRunsDiverged):
        tune_gamma(su, [0], 30, grid=[1e308])


def test_threshold_tuning_prunes_and_picks_fastest():
    su = setup(parse_config(SMALL))
    g0 = su.problem.full_grad(np.zeros(su.problem.dim))
    tau = 0.3 * float(g0 @ g0)
    grid = [2.0 ** i for i in range(-2, 4)]
    best, results = tune_gamma(su, [0, 1], 2000, grid=grid, threshold=tau)
    finished = [r for r in results if not (r.diverged or r.exhausted)]
    assert best in finished
    assert best.mean_rounds(tau) == min(r.mean_rounds(tau) for r in finished)


def test_rounds_to_threshold():
    su = setup(parse_config(SMALL))
    from dasha_pp.harness import engine_for

    record = engine_for(su, 1.0, 0).run(300)
    assert rounds_to_threshold(record, math.inf) == 0
    assert rounds_to_threshold(record, 0.0) is None
    tau = float(record.grad_norm_sq[0]) / 4
    hit = rounds_to_threshold(record, tau)
    assert hit == 21
    assert record.grad_norm_sq[hit] <= tau < record.grad_norm_sq[:hit].min()


def test_slowdown_full_participation_is_one():
    cfg = parse_config(SMALL)
    problem = build_problem(cfg)
    g0 = problem.full_grad(np.zeros(problem.dim))
    out = slowdown_ratio(cfg, [3], 0.5 * float(g0 @ g0), seeds=(0,), rounds=500,
                         grid=[0.5, 1.0, 2.0], problem=problem)
    assert out["ratios"] == {3: 1.0}


def test_f_star_estimate_below_start():
    problem = build_problem(parse_config(SMALL))
    assert estimate_f_star(problem, rounds=200) < problem.value(np.zeros(problem.dim))


def test_dataset_config(tmp_path):
    text = f"[problem]\ndataset = {fixture_path('small40.svm')}\nn = 4\n[compressor]\nkind = identity\n[run]\nrounds = 5\n"
    summary = run_experiment(parse_config(text), str(tmp_path))
    assert len(_rows(summary["csv_files"][0])) == 6


def test_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DASHA_PP_OUTPUT_DIR", str(tmp_path / "env_out"))
    run_experiment(parse_config(SMALL.replace("rounds = 200", "rounds = 3")))
    assert os.path.exists(tmp_path / "env_out" / "summary.json")
