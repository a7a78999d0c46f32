import numpy as np
import pytest

from entropic_collapse.config import (
    ConfigError,
    ConfigParseError,
    dumps,
    load_config,
    loads,
    set_value,
)
from pathlib import Path

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))

MINIMAL = """
[model]
kind = two_level
v1 = 0.5
[collapse]
t0 = 1.0
gamma0 = 0.2
[integration]
t_end = 5
"""


def test_minimal_config_defaults():
    cfg = loads(MINIMAL)
    assert cfg.dt == pytest.approx(0.01 / 1.0)  # omega0 = 2 v1
    assert cfg.initial == "basis" and cfg.initial_params["index"] == 0
    assert cfg.n_traj == 1000 and cfg.compare_density


def test_errors_are_collected_with_paths():
    text = MINIMAL.replace("t0 = 1.0", "t0 = -1").replace("t_end = 5", "t_end = x")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    fields = [p for p, _ in exc.value.errors]
    assert "collapse.t0" in fields and "integration.t_end" in fields


def test_non_hermitian_h1_reports_asymmetry():
    text = """
[model]
kind = custom_matrix
e0 = 0, 1
h1 = 0, 0.3; 0.1, 0
[collapse]
t0 = 1
gamma0 = 1
[integration]
t_end = 1
"""
    with pytest.raises(ConfigError, match="0.2"):
        loads(text)


def test_parse_error_has_position():
    with pytest.raises(ConfigParseError) as exc:
        loads("[model\nkind = two_level\n")
    assert exc.value.line == 1


def test_dt_guard():
    with pytest.raises(ConfigError, match="integration.dt"):
        loads(MINIMAL + "dt = 0.5\n")


def test_unknown_label_and_observable():
    with pytest.raises(ConfigError, match="unknown label"):
        loads(MINIMAL + "[initial]\nkind = basis\nstate = sideways\n")
    with pytest.raises(ConfigError, match="unknown observable"):
        loads(MINIMAL + "[outputs]\nobservables = width\n")


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_bundled_configs_round_trip(path):
    cfg = load_config(path)
    again = loads(dumps(cfg))
    assert again.to_dict() == cfg.to_dict()


def test_set_value():
    cfg = loads(set_value(MINIMAL, "collapse.gamma0", "0.7"))
    assert cfg.gamma0 == 0.7
    cfg = loads(set_value(MINIMAL, "ensemble.n_traj", "12"))
    assert cfg.n_traj == 12
    with pytest.raises(ValueError):
        set_value(MINIMAL, "gamma0", "1")


def test_wavepacket_defaults_follow_lambda0():
    cfg = loads("""
[model]
kind = wavepacket
mass = 1
grid_n = 256
[collapse]
t0 = 6.283185307179586
gamma0 = 1
[integration]
t_end = 1
""")
    mp = cfg.model_params
    assert mp["grid_dx"] == pytest.approx(0.25)
    assert mp["cell_width"] == pytest.approx(1.0)
    assert cfg.initial == "gaussian" and cfg.initial_params["sigma0"] == pytest.approx(2.0)
