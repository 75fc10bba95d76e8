import math

import numpy as np
import pytest

from floquet_lindblad import Model1Params, model1_lindbladian
from floquet_lindblad.config import (
    PRESETS,
    ScenarioConfig,
    build_lindbladian,
    expand_sweep,
    initial_density_matrix,
    load_config,
    parse_config,
    parse_number,
    preset_path,
)
from floquet_lindblad.errors import ConfigError

MODEL1_CUSTOM = """
period = "pi"

[[hamiltonian]]
operator = "sz"
amplitude = 1.0

[[jumps]]
rate = 0.2
[[jumps.terms]]
operator = "sp"
kind = "cos"
harmonic = 1
[[jumps.terms]]
operator = "sm"
kind = "sin"
harmonic = 1
"""


@pytest.mark.parametrize("text, value", [("pi/4", math.pi / 4), ("2*pi", 2 * math.pi), ("-1.5e-3", -1.5e-3),
                                         ("pi**2", math.pi**2), (3, 3.0)])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


@pytest.mark.parametrize("bad", ["__import__('os')", "pi.real", "foo", "1 +", True])
def test_parse_number_rejects(bad):
    with pytest.raises(ConfigError):
        parse_number(bad, "params.x")


def test_all_presets_load_with_published_parameters():
    assert set(PRESETS) == {"fig1", "fig2", "fig3", "fig4"}
    fig1 = load_config(preset_path("fig1"))
    assert fig1.params == {"omega_z": 1.0, "gamma": 0.2, "omega": 2.0}
    assert fig1.sweep_values == (1.0, 1.5, 2.0, 3.0)
    assert fig1.methods == ("exact", "magnus1")
    fig2 = load_config(preset_path("fig2"))
    assert (fig2.sweep_parameter, fig2.sweep_values) == ("gamma", (0.1, 0.2, 0.5, 1.0))
    fig3 = load_config(preset_path("fig3"))
    assert fig3.params["theta"] == pytest.approx(math.pi / 4)
    assert fig3.params["phi"] == pytest.approx(math.pi / 2)
    assert fig3.params["gamma"] == 0.1
    fig4 = load_config(preset_path("fig4"))
    assert fig4.params["omega"] == 5.0
    np.testing.assert_allclose(fig4.sweep_values, [math.pi / 2, math.pi / 3, math.pi / 4, math.pi / 8])
    for cfg in (fig1, fig2, fig3, fig4):
        assert cfg.initial_state == "excited" and cfg.n_periods == 10


def test_expand_sweep_names_points():
    cfg = load_config(preset_path("fig1"))
    points = expand_sweep(cfg)
    assert [s for s, _ in points] == ["omega=1", "omega=1.5", "omega=2", "omega=3"]
    assert points[1][1].params["omega"] == 1.5
    assert points[1][1].sweep_parameter is None
    assert expand_sweep(points[0][1]) == [("", points[0][1])]


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="methods"):
        ScenarioConfig(methods=())
    with pytest.raises(ConfigError, match="unknown method"):
        ScenarioConfig(methods=("exact", "magnus9"))
    with pytest.raises(ConfigError, match="points_per_period"):
        ScenarioConfig(points_per_period=0)
    with pytest.raises(ConfigError, match="norm"):
        ScenarioConfig(initial_state=(1.0, 1.0, 0.0))
    with pytest.raises(ConfigError, match="model"):
        ScenarioConfig(model="model3")
    with pytest.raises(ConfigError, match="analytic"):
        ScenarioConfig(model="custom-file", methods=("analytic0",))
    with pytest.raises(ConfigError, match="unknown top-level"):
        parse_config({"modle": "model1"})


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text('model = "model1"\nmethods = ["exact",\nname = 3\n')
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_bad_model_parameter_names_field(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text('model = "model1"\n[params]\nomega = "two"\n')
    with pytest.raises(ConfigError, match="params.omega"):
        load_config(path)
    cfg = parse_config({"model": "model1", "params": {"omegaz": 1.0}})
    with pytest.raises(ConfigError, match="params"):
        build_lindbladian(cfg)


def test_initial_states():
    assert initial_density_matrix("excited").data[0, 0] == 1
    assert initial_density_matrix("ground").data[1, 1] == 1
    np.testing.assert_allclose(initial_density_matrix("mixed").data, np.eye(2) / 2)
    rho = initial_density_matrix((0.0, 0.6, 0.0))
    assert rho.data[1, 0] == pytest.approx(0.3j)


def test_custom_file_reproduces_model1(tmp_path):
    (tmp_path / "m1.toml").write_text(MODEL1_CUSTOM)
    (tmp_path / "scenario.toml").write_text('model = "custom-file"\n[params]\nfile = "m1.toml"\n')
    L = build_lindbladian(load_config(tmp_path / "scenario.toml"))
    ref = model1_lindbladian(Model1Params(omega=2.0))
    assert L.period == pytest.approx(ref.period)
    for t in np.linspace(0, 3, 7):
        np.testing.assert_allclose(L(t), ref(t), atol=1e-14)


def test_custom_file_errors(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('period = 1.0\n[[hamiltonian]]\noperator = "sp"\n')
    cfg = ScenarioConfig(model="custom-file", params={"file": str(path)})
    with pytest.raises(ConfigError, match="Hermitian"):
        build_lindbladian(cfg)
    path.write_text('period = 1.0\n[[hamiltonian]]\noperator = "sq"\n')
    with pytest.raises(ConfigError, match="unknown operator"):
        build_lindbladian(cfg)
    path.write_text('[[hamiltonian]]\noperator = "sz"\n')
    with pytest.raises(ConfigError, match="period"):
        build_lindbladian(cfg)
    with pytest.raises(ConfigError, match="params.file"):
        build_lindbladian(ScenarioConfig(model="custom-file"))
