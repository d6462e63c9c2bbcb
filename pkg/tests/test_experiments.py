import json
import math

import pytest

from hawkesbias.calibrate import MultiStartConfig
from hawkesbias.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    SweepResult,
    daily_blocks,
    derive_seed,
    quantile_table,
    run_experiment,
    scale_audit,
)

EXP_KERNEL = {"family": "exponential", "tau": 0.1}


def small(**kw):
    base = dict(realizations=2, T=3000.0, burn_in=50.0, seed=7, multistart=MultiStartConfig(grid_size=3))
    base.update(kw)
    return ExperimentConfig(**base)


def outlier_config(**kw):
    return small(params={"kernels": [EXP_KERNEL], "fractions": [0.0, 0.01], "multipliers": [2]}, **kw)


def test_derive_seed_distinct_and_stable():
    seeds = {derive_seed(1, a, b) for a in range(10) for b in range(10)}
    assert len(seeds) == 100
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert 0 <= derive_seed(5) < 2**63


@pytest.mark.parametrize("kw", [{"realizations": 0}, {"scale": 0.0}, {"scale": 1.5}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_window_defaults_and_cap():
    cfg = ExperimentConfig(scale=0.5)
    assert cfg.window(1e5, 1e8, burn_cap=1e6) == (1e5, 1e6)
    assert cfg.window(1e5, 1e4) == (1e5, 5e3)
    assert ExperimentConfig(T=10.0, burn_in=3.0).window(1e5, 1e8) == (10.0, 3.0)


def test_outlier_experiment_rows_and_metadata():
    res = run_experiment("outlier_bias", outlier_config())
    assert isinstance(res, SweepResult)
    assert res.axes == ("kernel", "M", "fraction")
    assert len(res.rows) == 2 and len(res.runs) == 4
    for row in res.rows:
        assert row["R"] == 2 and row["n_std"] >= 0
        assert "tau_mean" in row and "mu_mean" in row
    meta = res.metadata
    assert meta["config"]["experiment"] == "outlier_bias"
    assert meta["config"]["scale"] == 1.0 and meta["config"]["seed"] == 7
    assert meta["max_stationarity_residual"] <= 1e-6
    json.dumps(meta)


def test_experiment_deterministic_across_jobs():
    a = run_experiment("outlier_bias", outlier_config(jobs=1))
    b = run_experiment("outlier_bias", outlier_config(jobs=2))
    assert a.runs == b.runs and a.rows == b.rows
    c = run_experiment("outlier_bias", outlier_config(seed=8))
    assert c.runs != a.runs


def test_sweep_result_io(tmp_path):
    res = run_experiment("outlier_bias", outlier_config())
    path, meta = res.write(tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("kernel,M,fraction,n_mean,n_std")
    assert len(lines) == 3
    assert json.loads(meta.read_text())["config"]["realizations"] == 2
    assert res.value(kernel="exponential", M=2, fraction=0.01) == res.rows[1]["n_mean"]
    with pytest.raises(KeyError):
        res.value(kernel="omori")


def test_misspec_shares_data_between_cases():
    cfg = small(params={"cases": ["i", "iii"], "n_values": [0.0]}, T=1e5, realizations=1)
    cfg.multistart = MultiStartConfig(top_k=2)
    res = run_experiment("kernel_misspec", cfg)
    N = {r["case"]: r["N"] for r in res.runs}
    assert N["i"] == N["iii"]
    # Poisson data: both fits stay near zero
    assert all(r["n_hat"] < 0.1 for r in res.runs)


def test_bundling_asymptote_limit_column():
    cfg = small(params={"rates": [2.0], "fit_family": "exponential"}, T=2000.0)
    res = run_experiment("bundling_asymptote", cfg)
    (row,) = res.rows
    assert row["n_cluster_limit"] == pytest.approx((2 - (1 - math.exp(-2))) / 2)


def test_regime_shift_orders():
    cfg = small(params={"panels": ["mu"], "mu2_values": [1.0], "kernel": EXP_KERNEL}, T=2000.0, realizations=1)
    res = run_experiment("regime_shift", cfg)
    assert {r["order"] for r in res.runs} == {"12", "21"}
    a, b = res.runs
    assert a["N"] == b["N"]


def test_daily_blocks_variants():
    const = daily_blocks("constant", 5, 1000.0, 0.5, 0.5, seed=1)
    assert const.T == pytest.approx(5000.0)
    drop = daily_blocks("drop_low", 30, 100.0, 1.0, 1.0, seed=2)
    full = daily_blocks("poisson", 30, 100.0, 1.0, 1.0, seed=2)
    assert drop.T < full.T
    hawkes = daily_blocks("hawkes", 3, 1000.0, 1.0, 0.5, seed=3)
    assert hawkes.T == pytest.approx(3000.0)


def test_quantile_table_poisson_ratios():
    cfg = ExperimentConfig(realizations=4, T=1e5, burn_in=0.0, seed=1, params={"grid": [(0.0, 1.0)], "mu": 0.05})
    (row,) = quantile_table(cfg)
    # exponential durations: Q99/Q90 = ln(100)/ln(10)
    assert row["Q99"] / row["Q90"] == pytest.approx(2.0, rel=0.05)
    assert row["Q90"] == pytest.approx(math.log(10) / 0.05, rel=0.05)
    assert row["Q95/Q90"] == pytest.approx(row["Q95"] / row["Q90"])


def test_edge_rate_curves_structure():
    cfg = ExperimentConfig(realizations=3, seed=2, params={"epsilons": [1.0], "horizon": 500.0, "n": 0.5})
    curves = run_experiment("edge_rate_curves", cfg)
    c = curves[1.0]
    assert c["count"].shape == c["t"].shape == (50,)
    assert c["plateau"] == pytest.approx(1.0 / 0.5 * 10.0)
    assert c["T95"] < c["T99"]


def test_scale_audit_rows():
    cfg = outlier_config(burn_in=None, T=2000.0)
    rows = scale_audit("outlier_bias", cfg)
    assert len(rows) == 2
    for r in rows:
        assert r["band"] >= 0 and isinstance(r["flagged"], bool)


def test_unknown_experiment():
    with pytest.raises(ValueError):
        run_experiment("nope", ExperimentConfig())


def test_registry_covers_studies():
    assert {
        "outlier_bias",
        "kernel_misspec",
        "edge_effect",
        "bundling",
        "bundling_asymptote",
        "regime_shift",
        "poisson_criticality",
        "quantile_table",
        "cost_surface",
    } <= set(EXPERIMENTS)
