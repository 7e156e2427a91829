"""
Testy plików konfiguracyjnych klucz = wartość.
"""

from pathlib import Path

import pytest

from armot.config import build_config, check_known_keys, parse_config_text, read_config, write_config
from armot.errors import ConfigError
from armot.inference import InferConfig
from armot.model import ModelConfig
from armot.simdata import OracleConfig, ScenarioConfig, SuiteConfig
from armot.trainer import LossWeights, TrainConfig


def test_parse_literals_and_bare_words():
    mapping = parse_config_text(
        "# komentarz\n"
        "mode = tmf\n"
        "tau_loss = 3   # po spacji\n"
        "\n"
        "occlusions = [(3, 2, 0), (10, 4, 1)]\n"
        "name = 'a#b'\n"
        "deterministic = True\n")
    assert mapping == {"mode": "tmf", "tau_loss": 3, "occlusions": [(3, 2, 0), (10, 4, 1)],
                       "name": "a#b", "deterministic": True}


def test_duplicate_key_names_line():
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("seed = 1\nseed = 2\n", source="run.cfg")


def test_missing_equals_sign():
    with pytest.raises(ConfigError):
        parse_config_text("seed 1\n")


def test_write_read_round_trip(tmp_path):
    mapping = {"seed": 7, "lr": 6e-05, "gap_range": (1, 10), "mode": "window", "use_tmf": False}
    write_config(mapping, tmp_path / "run.cfg")
    assert read_config(tmp_path / "run.cfg") == mapping


def test_missing_file():
    with pytest.raises(ConfigError):
        read_config("/nonexistent/run.cfg")


def test_build_config_coerces_and_overrides():
    mapping = {"occlusions": [[3, 2, 0]], "similarity": 1, "seed": 4, "tau_loss": 2}
    scenario = build_config(ScenarioConfig, mapping, seed=9)
    assert scenario.occlusions == ((3, 2, 0),)
    assert scenario.similarity == 1.0
    assert scenario.seed == 9
    assert build_config(InferConfig, mapping, tau_loss=None).tau_loss == 2


def test_build_config_runs_validation():
    with pytest.raises(ConfigError):
        build_config(InferConfig, {"mode": "nope"})
    with pytest.raises(ConfigError):
        build_config(TrainConfig, {"gap_range": [5, 1]})


def test_check_known_keys():
    check_known_keys({"tau_loss": 1, "epochs": 2}, InferConfig, TrainConfig)
    with pytest.raises(ConfigError, match="taul_oss"):
        check_known_keys({"taul_oss": 1}, InferConfig)


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name, classes", [
    ("simulate.cfg", (SuiteConfig, OracleConfig)),
    ("train.cfg", (ModelConfig, TrainConfig, LossWeights, OracleConfig)),
    ("track.cfg", (InferConfig, OracleConfig)),
    ("ablate.cfg", (ModelConfig, TrainConfig, InferConfig, SuiteConfig, OracleConfig)),
])
def test_shipped_configs_are_valid(name, classes):
    mapping = read_config(CONFIG_DIR / name)
    check_known_keys(mapping, *classes)
    for cls in classes:
        build_config(cls, mapping)
