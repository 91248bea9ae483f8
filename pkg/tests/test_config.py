import logging

import pytest
from pydantic import ValidationError

from carnot_gmt.config import ExperimentConfig, Settings, parse_range
from carnot_gmt.errors import UsageError
from carnot_gmt.gmt import Estimator
from carnot_gmt.logging_setup import configure_logging
from carnot_gmt.metric import LayerNorm


def test_parse_range():
    assert parse_range("1e-1:1e-3") == (0.1, 0.001)
    assert parse_range("0.01:0.5") == (0.01, 0.5)
    for bad in ("0.1", "0:1", "0.1:0.1", "-1:0.5", "a:b"):
        with pytest.raises(ValueError):
            parse_range(bad)


def test_defaults():
    config = ExperimentConfig(command="group")
    assert config.group == "heisenberg:1"
    assert config.seed == 0
    assert config.layer_norm is LayerNorm.SUP
    assert config.estimator is Estimator.QUADRATURE
    assert config.scales == 8


@pytest.mark.parametrize(
    "data",
    [
        {"command": "plot"},
        {"command": "degree"},
        {"command": "blowup", "group": "engel"},
        {"command": "dimension"},
        {"command": "charset", "bound": True},
        {"command": "group", "scales": 3},
        {"command": "group", "weights": [1.0, 0.0]},
        {"command": "charset", "chart": "plane", "epsilon": 1.5},
        {"command": "group", "seed": -1},
        {"command": "measure", "chart": "line", "estimator": "trapezoid"},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(data)


def test_chart_is_optional_where_another_input_exists():
    assert ExperimentConfig(command="dimension", points="cloud.csv").chart is None
    assert ExperimentConfig(command="charset", bound=True, p=2).p == 2


def test_radii_are_log_spaced_and_decreasing():
    config = ExperimentConfig(command="blowup", chart="line", radii="1e-3:1e-1", radii_count=3)
    assert config.radii == (0.001, 0.1)
    assert config.radius_list((1.0, 0.5)) == pytest.approx([0.1, 0.01, 0.001])
    default = ExperimentConfig(command="blowup", chart="line", radii_count=2)
    assert default.radius_list((1e-1, 1e-3)) == pytest.approx([0.1, 0.001])


def test_scale_list_uses_the_scale_count():
    config = ExperimentConfig(command="dimension", chart="segment", scales=5)
    scales = config.scale_list((1e-1, 1e-3))
    assert len(scales) == 5
    assert scales == sorted(scales, reverse=True)


def test_config_echo_round_trips():
    config = ExperimentConfig(
        command="measure", chart="disk", group="abelian:2", region=[(0.0, 0.5), (0.0, 3.0)],
        estimator="monte-carlo", samples=5000, seed=4, weights=[1.0, 2.0],
    )
    echo = config.model_dump(mode="json")
    assert echo["estimator"] == "monte-carlo"
    assert ExperimentConfig.model_validate(echo) == config


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("CARNOT_GMT_THREADS", "3")
    monkeypatch.setenv("CARNOT_GMT_LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.threads == 3
    assert settings.log_level == "debug"
    monkeypatch.setenv("CARNOT_GMT_THREADS", "0")
    with pytest.raises(ValidationError):
        Settings()


def test_configure_logging_installs_one_handler():
    logger = configure_logging("warning")
    configure_logging("DEBUG")
    assert logger.level == logging.DEBUG
    assert len([h for h in logger.handlers if h.get_name() == "carnot_gmt.stderr"]) == 1
    with pytest.raises(UsageError):
        configure_logging("LOUD")
