import math

import pytest

from gaussmi.config import ConfigError, SystemConfig, format_config, load_config, parse_config


def test_defaults_match_published_parameter_table():
    cfg = SystemConfig()
    assert (cfg.lambda_L, cfg.lambda_T, cfg.T) == (1.7, 7.0, 1.6)
    assert (cfg.w_I, cfg.w_J) == (0.03, 0.01)
    assert (cfg.tau, cfg.phi) == (0.7, 0.75)


def test_artifact_defaults():
    cfg = SystemConfig()
    assert cfg.lambda_c == 0.9
    assert cfg.V_xy == (-0.5, -0.25, 0.0, 0.25, 0.5)
    assert cfg.V_z == (-0.3, 0.0, 0.3)
    assert cfg.Omega_z == (-math.pi / 4, -math.pi / 8, 0.0, math.pi / 8, math.pi / 4)
    assert (cfg.noise_a, cfg.noise_b) == (0.01, 0.0001)
    assert cfg.cost_normalized is False


@pytest.mark.parametrize("changes", [
    dict(lambda_L=0.0), dict(lambda_T=-1.0), dict(lambda_c=1.5), dict(tau=1.0),
    dict(phi=0.0), dict(T=0.0), dict(noise_b=0.0), dict(workspace_min=(0, 0, 5)),
])
def test_invariants_rejected(changes):
    with pytest.raises(ConfigError):
        SystemConfig(**changes)


def test_parse_flat_file():
    cfg = parse_config("""
        # comment line
        lambda_L = 2.0
        T = 1.0   # trailing comment
        Omega_z = -pi/4, 0, pi/4
        cost_normalized = true
        depth_scale = auto
        spawn_stride = 3
    """)
    assert cfg.lambda_L == 2.0 and cfg.T == 1.0
    assert cfg.Omega_z == (-math.pi / 4, 0.0, math.pi / 4)
    assert cfg.cost_normalized is True
    assert cfg.depth_scale is None
    assert cfg.spawn_stride == 3
    assert cfg.lambda_T == 7.0  # untouched keys keep defaults


def test_unknown_key_is_error():
    with pytest.raises(ConfigError, match="unknown key 'lambda_x'"):
        parse_config("lambda_x = 1")


def test_bad_values_are_errors():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("T = 1\nlambda_L = abc")
    with pytest.raises(ConfigError):
        parse_config("no equals sign here")
    with pytest.raises(ConfigError):
        parse_config("tau = 2")


def test_format_round_trip(tmp_path):
    cfg = SystemConfig(lambda_L=1.3, V_z=(0.0,), depth_scale=4.0, cost_normalized=True)
    path = tmp_path / "c.cfg"
    path.write_text(format_config(cfg))
    assert load_config(path) == cfg
    path.write_text(format_config(SystemConfig()))
    assert load_config(path) == SystemConfig()
