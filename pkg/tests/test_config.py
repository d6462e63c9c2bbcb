import pytest

from hawkesbias.config import ConfigError, experiment_config, list_presets, load_config, parse_config, preset_path
from hawkesbias.experiments import EXPERIMENTS


def test_parse_literals_and_comments():
    flat = parse_config(
        """
        # comment
        T = 1e5
        params.n_values = [0.1, 0.2]  # trailing comment
        params.kernel = {"family": "omori", "c": 1.0, "theta": 0.5}
        params.fit_family = approx_power_law
        """
    )
    assert flat == {
        "T": 1e5,
        "params.n_values": [0.1, 0.2],
        "params.kernel": {"family": "omori", "c": 1.0, "theta": 0.5},
        "params.fit_family": "approx_power_law",
    }


def test_parse_error_names_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("a = 1\nnot a pair\n")


def test_include_and_override(tmp_path):
    (tmp_path / "base.cfg").write_text("seed = 1\nrealizations = 5\n")
    (tmp_path / "top.cfg").write_text("include = base.cfg\nseed = 2\n")
    assert load_config(tmp_path / "top.cfg") == {"seed": 2, "realizations": 5}


def test_include_cycle(tmp_path):
    (tmp_path / "a.cfg").write_text("include = b.cfg\n")
    (tmp_path / "b.cfg").write_text("include = a.cfg\n")
    with pytest.raises(ConfigError, match="cycle"):
        load_config(tmp_path / "a.cfg")


def test_experiment_config_sections():
    cfg = experiment_config(
        {"realizations": 3, "T": 100, "multistart.top_k": 2, "params.mu": 0.5, "multistart.start_bounds": {"tau": [1, 2]}},
        seed=9,
    )
    assert cfg.realizations == 3 and cfg.T == 100.0 and cfg.seed == 9
    assert cfg.multistart.top_k == 2 and cfg.multistart.start_bounds["tau"] == (1, 2)
    assert cfg.params == {"mu": 0.5}


@pytest.mark.parametrize("flat", [{"bogus": 1}, {"multistart.bogus": 1}])
def test_experiment_config_rejects_unknown(flat):
    with pytest.raises(ConfigError):
        experiment_config(flat)


def test_presets_resolve_to_experiments():
    names = list_presets()
    assert len(names) >= 10
    for name in names:
        flat = load_config(preset_path(name))
        if name == "common":
            continue
        exp = flat.pop("experiment")
        assert exp in EXPERIMENTS
        cfg = experiment_config(flat)
        assert cfg.realizations >= 1


def test_preset_by_name():
    assert load_config("regime")["params.n1"] == 0.5
