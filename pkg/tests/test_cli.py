import json
import subprocess
import sys

import numpy as np
import pytest

from hawkesbias.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from hawkesbias.series import EventSeries, read_series, write_series


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    # default outputs land in the cwd
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("HAWKESBIAS_OUTDIR", raising=False)


@pytest.fixture
def series_file(tmp_path):
    assert main(
        ["simulate", "--kernel", "exp", "--tau", "0.1", "--mu", "0.3", "--n", "0.7", "--T", "3000", "--burn", "100",
         "--seed", "1", "--outdir", str(tmp_path)]
    ) == EXIT_OK
    return tmp_path / "series.txt"


def test_simulate_writes_series_and_manifest(series_file):
    s = read_series(series_file)
    assert s.window == (0.0, 3000.0) and len(s) > 100
    m = json.loads(series_file.with_suffix(".manifest.json").read_text())
    assert m["subcommand"] == "simulate" and m["seed"] == 1
    assert m["params"]["n"] == 0.7 and "version" in m and m["wall_seconds"] >= 0


def test_roundtrip_exact(tmp_path):
    t = np.cumsum(np.random.default_rng(0).exponential(size=500)) * np.pi
    s = EventSeries(t, 0.0, float(t[-1]) + 1 / 3)
    for name in ("s.txt", "s.csv"):
        write_series(s, tmp_path / name)
        assert read_series(tmp_path / name) == s


def test_fit_reports_all_starts(series_file, tmp_path, capsys):
    assert main(["fit", "--kernel", "exp", "--input", str(series_file), "--jobs", "1"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert len(res["starts"]) == 5
    assert 0.4 < res["n_hat"] < 0.95
    out = tmp_path / "fit.json"
    assert main(["fit", "--kernel", "approx_pl", "-i", str(series_file), "--starts", "25", "--top-k", "2",
                 "--jobs", "1", "-o", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())["starts"]) == 25


def test_fit_bad_starts(series_file):
    assert main(["fit", "--kernel", "approx_pl", "-i", str(series_file), "--starts", "7"]) == EXIT_USAGE


def test_residuals_from_fit(series_file, tmp_path):
    fitp = tmp_path / "fit.json"
    main(["fit", "--kernel", "exp", "-i", str(series_file), "--jobs", "1", "-o", str(fitp)])
    out = tmp_path / "res.json"
    dump = tmp_path / "res.csv"
    assert main(["residuals", "-i", str(series_file), "--params", str(fitp), "-o", str(out), "--dump", str(dump)]) == 0
    rep = json.loads(out.read_text())
    assert {"ks_pvalue", "lb_pvalue", "passes_5pct"} <= set(rep)
    assert len(dump.read_text().splitlines()) == len(read_series(series_file)) + 1


@pytest.mark.parametrize(
    "op,extra",
    [
        ("bundle", ["--delta", "1"]),
        ("randomize", ["--delta", "0.5", "--seed", "3"]),
        ("outliers", ["--fraction", "0.01", "--multiplier", "2"]),
    ],
)
def test_transforms_preserve_count(series_file, tmp_path, op, extra):
    out = tmp_path / f"{op}.txt"
    assert main(["transform", op, "-i", str(series_file), "-o", str(out), *extra]) == EXIT_OK
    assert len(read_series(out)) == len(read_series(series_file))


def test_transform_detrend_and_concatenate(series_file, tmp_path):
    prof = tmp_path / "p.csv"
    prof.write_text("bin_start,rate\n0,2\n1500,2\n")
    out = tmp_path / "d.txt"
    assert main(["transform", "detrend", "-i", str(series_file), "--profile", str(prof), "-o", str(out)]) == 0
    assert np.allclose(read_series(out).times, 2 * read_series(series_file).times)
    cat = tmp_path / "c.txt"
    assert main(["transform", "concatenate", "-i", str(series_file), "-i", str(series_file), "--gap", "10",
                 "-o", str(cat)]) == 0
    assert read_series(cat).T == pytest.approx(6010.0)
    assert main(["transform", "detrend", "-i", str(series_file)]) == EXIT_USAGE


def test_ties_need_flag(tmp_path, capsys):
    f = tmp_path / "tied.txt"
    f.write_text("# window: 0 10\n1.0\n2.0\n2.0\n3.0\n")
    assert main(["fit", "--kernel", "exp", "-i", str(f)]) == EXIT_USAGE
    assert "line 4" in capsys.readouterr().err


def test_nonmonotone_names_line(tmp_path, capsys):
    f = tmp_path / "bad.txt"
    f.write_text("# window: 0 10\n1.0\n2.0\n5.0\n4.0\n")
    assert main(["transform", "bundle", "-i", str(f), "--allow-ties", "-o", str(tmp_path / "x.txt")]) == EXIT_USAGE
    assert "line 5" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["simulate", "--kernel", "exp", "--mu", "1"]) == EXIT_USAGE
    assert main(["simulate", "--kernel", "omori", "--mu", "1", "--n", "0.5", "--T", "10", "--c", "1"]) == EXIT_USAGE
    assert main(["experiment", "nope"]) == EXIT_USAGE


def test_truncation_is_numeric_failure(tmp_path):
    argv = ["simulate", "--kernel", "exp", "--tau", "1", "--mu", "1", "--n", "0.9", "--T", "1e5", "--cap", "100",
            "--outdir", str(tmp_path)]
    assert main(argv) == EXIT_NUMERIC


def test_outdir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HAWKESBIAS_OUTDIR", str(tmp_path / "env"))
    assert main(["simulate", "--kernel", "exp", "--tau", "1", "--mu", "1", "--n", "0", "--T", "10"]) == EXIT_OK
    assert (tmp_path / "env" / "series.txt").is_file()


def test_experiment_and_rerun_byte_identical(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(
        "include = common\n"
        "realizations = 2\nT = 2000\nburn_in = 50\nmultistart.grid_size = 3\n"
        'params.kernels = [{"family": "exponential", "tau": 0.1}]\n'
        "params.fractions = [0.0, 0.01]\nparams.multipliers = [2]\n"
    )
    first = tmp_path / "a"
    assert main(["experiment", "outlier_bias", "--config", str(cfg), "--jobs", "1", "--outdir", str(first)]) == 0
    csv = first / "outlier_bias.csv"
    assert len(csv.read_text().splitlines()) == 3
    manifest = first / "outlier_bias.manifest.json"
    second = tmp_path / "b"
    assert main(["rerun", str(manifest), "--outdir", str(second)]) == EXIT_OK
    assert (second / "outlier_bias.csv").read_bytes() == csv.read_bytes()


def test_experiment_set_override(tmp_path):
    argv = ["experiment", "bundling_asymptote", "--set", "params.rates=[1.0]", "--set", "T=500",
            "--realizations", "1", "--jobs", "1", "--outdir", str(tmp_path)]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "bundling_asymptote.meta.json").is_file()
    assert main(["experiment", "bundling_asymptote", "--set", "oops", "--outdir", str(tmp_path)]) == EXIT_USAGE


def test_surface_command(series_file, tmp_path):
    out = tmp_path / "surf.csv"
    assert main(["surface", "--kernel", "approx_pl", "-i", str(series_file), "--grid", "5", "--jobs", "1",
                 "-o", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 26
    m = json.loads(out.with_suffix(".manifest.json").read_text())
    assert len(m["local_minima"]) >= 1
    assert main(["surface", "--kernel", "exp", "-i", str(series_file), "-o", str(out)]) == EXIT_USAGE


def test_console_script_version():
    r = subprocess.run([sys.executable, "-m", "hawkesbias.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "hawkesbias" in r.stdout
