"""Configuration defaults, file parsing, and precedence."""

import pytest

from socnav import config


def test_defaults_are_sane():
    cfg = config.Config()
    assert cfg.grid_size == 64
    assert cfg.world_size == 10.0
    assert cfg.d_r == 128 and cfg.d_gamma == 64
    assert cfg.horizon == 8 and cfg.forecast_dt == 0.4
    assert cfg.v_max == 1.0 and cfg.accel == 0.5
    dwa = cfg.dwa()
    assert dwa.v_samples == 11 and dwa.omega_samples == 21
    limits = cfg.limits()
    assert limits.v_max == 1.0 and limits.alpha == 2.0


def test_parse_config_file_types_and_comments(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text(
        "# a comment\n"
        "\n"
        "grid_size = 32\n"
        "lr=0.01  \n"
        "timeout=5.0\n")
    values = config.parse_config_file(path)
    assert values == {"grid_size": 32, "lr": 0.01, "timeout": 5.0}
    assert isinstance(values["grid_size"], int)


def test_parse_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("grid_size=32\nnot_a_key=1\n")
    with pytest.raises(ValueError, match="not_a_key"):
        config.parse_config_file(path)


def test_parse_config_rejects_bad_values(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("grid_size=large\n")
    with pytest.raises(ValueError, match="grid_size"):
        config.parse_config_file(path)
    path.write_text("just a line\n")
    with pytest.raises(ValueError, match="key=value"):
        config.parse_config_file(path)


def test_resolution_order(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("epochs=7\nlr=0.5\n")
    # file beats defaults
    cfg = config.resolve_config(config_path=str(path), env={})
    assert cfg.epochs == 7 and cfg.lr == 0.5
    # flags beat the file; None overrides are skipped
    cfg = config.resolve_config(config_path=str(path),
                                overrides={"epochs": 3, "lr": None}, env={})
    assert cfg.epochs == 3 and cfg.lr == 0.5
    # no file, no flags: defaults
    cfg = config.resolve_config(env={})
    assert cfg.epochs == config.Config().epochs


def test_env_var_names_the_config_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("epochs=11\n")
    cfg = config.resolve_config(env={config.ENV_VAR: str(path)})
    assert cfg.epochs == 11
    # an explicit path wins over the environment
    other = tmp_path / "d.txt"
    other.write_text("epochs=13\n")
    cfg = config.resolve_config(config_path=str(other),
                                env={config.ENV_VAR: str(path)})
    assert cfg.epochs == 13


def test_unknown_override_rejected():
    with pytest.raises(ValueError):
        config.resolve_config(overrides={"bogus": 1}, env={})
