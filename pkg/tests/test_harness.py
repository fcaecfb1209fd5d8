"""Experiment harness: configs, determinism, cell scheduling, CSV output."""

import csv
import io

import numpy as np
import pytest

import lordsketch.harness as harness
from lordsketch.harness import (
    CSV_COLUMNS,
    STABILITY_CONFIGS,
    CellTask,
    ExperimentConfig,
    build_config,
    load_config_file,
    run_bounds,
    run_cell,
    run_experiment,
    run_single,
    sample_seed_for,
    write_rows,
)
from lordsketch.sketch import ConfigError


def _tiny_grid_cfg(**kw):
    base = dict(
        experiment="grid",
        n=48,
        k=2,
        budget=12,
        families=(("exp", 0.5), ("noise", 0.01)),
        xi=(1.0,),
        methods=("ssvd", "sketchlord"),
        recoveries=("compact",),
        samples=2,
        master_seed=7,
        max_iters=300,
    )
    base.update(kw)
    return build_config(base.pop("experiment"), None, **base)


def _body_without_runtime(rows):
    out = []
    for row in rows:
        out.append(tuple((c, row[c]) for c in CSV_COLUMNS if c != "runtime_s"))
    return out


def test_grid_row_count_and_budget_equality():
    cfg = _tiny_grid_cfg()
    rows = run_experiment(cfg)
    assert len(rows) == 2 * 1 * 2 * 2 * 1  # families * xi * samples * methods * recoveries
    by_cell = {}
    for row in rows:
        assert row["status"] == "ok"
        by_cell.setdefault((row["family"], row["sample_seed"]), set()).add(row["mvp_cost"])
    for costs in by_cell.values():
        assert len(costs) == 1  # equal MVPs across methods within a cell


def test_rerun_is_deterministic():
    cfg = _tiny_grid_cfg()
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert _body_without_runtime(a) == _body_without_runtime(b)


def test_worker_pool_matches_sequential(tmp_path):
    seq_cfg = _tiny_grid_cfg(output=str(tmp_path / "seq.csv"))
    par_cfg = _tiny_grid_cfg(output=str(tmp_path / "par.csv"), workers=3)
    run_experiment(seq_cfg)
    run_experiment(par_cfg)

    def strip_runtime(path):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        idx = rows[0].index("runtime_s")
        return [[c for i, c in enumerate(r) if i != idx] for r in rows]

    assert strip_runtime(tmp_path / "seq.csv") == strip_runtime(tmp_path / "par.csv")


def test_workers_env_override(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV_VAR, "5")
    assert harness.effective_workers(1) == 5
    monkeypatch.setenv(harness.WORKERS_ENV_VAR, "bogus")
    with pytest.raises(ConfigError):
        harness.effective_workers(1)
    monkeypatch.delenv(harness.WORKERS_ENV_VAR)
    assert harness.effective_workers(2) == 2


def test_failed_cells_become_error_rows(monkeypatch):
    import lordsketch.harness as hm

    real = hm.ssvd

    def flaky(A, omega, upsilon, recovery="singlepass", core=None):
        raise RuntimeError("boom")

    monkeypatch.setattr(hm, "ssvd", flaky)
    rows = run_experiment(_tiny_grid_cfg())
    monkeypatch.setattr(hm, "ssvd", real)
    ssvd_rows = [r for r in rows if r["method"] == "ssvd"]
    other_rows = [r for r in rows if r["method"] != "ssvd"]
    assert all(r["status"] == "error:RuntimeError" for r in ssvd_rows)
    assert all(r["status"] == "ok" for r in other_rows)


def test_toy_experiment_rows():
    cfg = build_config(
        "toy",
        None,
        n=32,
        budgets=(12, 24),
        methods=("xdiag", "sketchlord"),
        recoveries=("singlepass",),
        samples=2,
        master_seed=1,
        max_iters=200,
    )
    rows = run_experiment(cfg)
    assert len(rows) == 2 * 2 * 2
    assert {row["p_budget"] for row in rows} == {12, 24}
    assert all(row["family"] == "toy" for row in rows)
    assert all(row["N"] == 32 for row in rows)


def test_stability_tasks_cover_table():
    cfg = build_config("stability", None, n=48, k=2, budget=12, samples=1, master_seed=0, max_iters=150)
    rows = run_experiment(cfg)
    assert len(rows) == len(STABILITY_CONFIGS)
    got = {(row["eta"], row["lambda"], row["mu"]) for row in rows}
    assert got == set(STABILITY_CONFIGS)
    assert all(row["method"] == "sketchlord" for row in rows)


def test_run_single_toy_and_trace(tmp_path):
    trace_path = tmp_path / "trace.csv"
    cfg = build_config(
        "single",
        None,
        family="toy",
        n=48,
        budget=12,
        method="sketchlord",
        recovery="compact",
        master_seed=3,
        max_iters=300,
        trace_path=str(trace_path),
    )
    report, trace, rows = run_single(cfg)
    assert report.rho_total < 1e-3
    assert trace is not None and trace_path.exists()
    assert rows[0]["iterations"] == trace.iterations


def test_run_single_synth():
    cfg = build_config(
        "single",
        None,
        family="exp",
        t=0.5,
        n=64,
        k=2,
        xi_single=1.0,
        budget=24,
        method="d_then_lor",
        recovery="singlepass",
        master_seed=4,
    )
    report, trace, rows = run_single(cfg)
    assert trace is None
    assert np.isfinite(report.rho_total)
    assert report.mvp_cost == 24


def test_run_bounds_values(tmp_path):
    out = tmp_path / "bounds.csv"
    rows = run_bounds(200, 10, str(out))
    assert len(rows) == 10
    assert abs(rows[0]["rho_lor"] - (1 - 1 / 200) / 203) < 1e-15
    assert len({row["rho_d"] for row in rows}) == 1  # constant in k
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "N,k,rho_d,rho_lor,rho_d_then_lor,rho_lor_then_d"
    assert len(lines) == 11


def test_run_bounds_k_equals_n_zeros():
    rows = run_bounds(6)
    assert rows[-1]["rho_lor"] == 0.0 and rows[-1]["rho_lor_then_d"] == 0.0


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# comment\n"
        "schema_version = 1\n"
        "experiment = grid\n"
        "families = exp(0.5), poly(2)\n"
        "n = 64\n"
        "k = 2\n"
        "budget = 12\n"
        "xi = 0, 1\n"
        "methods = ssvd, xdiag\n"
        "recoveries = compact\n"
        "samples = 3\n"
        "master_seed = 9\n"
    )
    cfg = build_config("grid", load_config_file(path))
    assert cfg.families == (("exp", 0.5), ("poly", 2.0))
    assert cfg.samples == 3 and cfg.master_seed == 9


def test_config_file_requires_schema_version(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("experiment = grid\n")
    with pytest.raises(ConfigError, match="schema_version"):
        load_config_file(path)
    path.write_text("schema_version = 2\n")
    with pytest.raises(ConfigError, match="schema_version"):
        load_config_file(path)


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("schema_version = 1\nbogus = 3\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config_file(path)


def test_config_validation_rules():
    with pytest.raises(ConfigError):
        _tiny_grid_cfg(budget=10)  # not a multiple of 6
    with pytest.raises(ConfigError):
        _tiny_grid_cfg(methods=("svd",))
    with pytest.raises(ConfigError):
        _tiny_grid_cfg(samples=0)
    with pytest.raises(ConfigError):
        build_config("grid", None, n=1000, budget=180)  # needs allow_large
    build_config("grid", None, n=1000, budget=180, k=10, allow_large=True)


def test_default_grid_geometry():
    cfg = ExperimentConfig(experiment="grid")
    assert cfg.resolved_k() == 5
    assert cfg.resolved_budget() == 90


def test_sample_seed_stability():
    assert sample_seed_for(0, 0) == sample_seed_for(0, 0)
    assert sample_seed_for(0, 0) != sample_seed_for(0, 1)
    assert sample_seed_for(0, 0) != sample_seed_for(1, 0)


def test_write_rows_formatting():
    task = CellTask(
        index=0,
        experiment="grid",
        methods=("ssvd",),
        recoveries=("compact",),
        budget=12,
        sample_seed=5,
        admm={"eta": 1.0, "lam": 0.0125, "momentum": 0.95, "ema_decay": 0.9,
              "ema_tol": 1e-7, "max_iters": 100, "momentum_kind": "heavy_ball"},
        family="exp",
        t=0.5,
        n=32,
        k=2,
        xi=1.0,
    )
    rows, _ = run_cell(task)
    buf = io.StringIO()
    write_rows(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    record = next(csv.reader([lines[1]]))
    assert record[CSV_COLUMNS.index("method")] == "ssvd"
    assert record[CSV_COLUMNS.index("iterations")] == ""  # not a solver method
