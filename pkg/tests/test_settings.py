import json

import pytest
import yaml

from config.settings import (
    METHODS, ExperimentConfig, TrainConfig, create_default_config_file, load_config,
)
from utils.exceptions import ConfigError


def test_defaults_are_valid(tmp_path):
    config = ExperimentConfig(output_dir=str(tmp_path))
    assert config.methods == list(METHODS)
    assert config.distill.loss == "kl_to_targets"
    assert config.k == 5
    assert config.train.weight_decay > 0
    assert config.distill.weight_decay == 0


def test_all_problems_are_reported_together(tmp_path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(output_dir=str(tmp_path), k=2, unlearn_ratio=1.5, seeds=[], mia_repeats=1)
    assert {"k", "unlearn_ratio", "seeds", "mia_repeats"} <= set(info.value.fields)


def test_two_parts_allowed_without_roel_methods(tmp_path):
    config = ExperimentConfig(output_dir=str(tmp_path), k=2, methods=["sisa", "relabel"])
    assert config.k == 2


def test_train_config_validation():
    with pytest.raises(ConfigError) as info:
        TrainConfig(learning_rate=0, batch_size=0, loss="hinge")
    assert set(info.value.fields) == {"learning_rate", "batch_size", "loss"}
    assert TrainConfig(seed=1).with_seed(9).seed == 9


def test_nested_sections_merge_over_defaults(tmp_path):
    config = ExperimentConfig.from_dict({
        "output_dir": str(tmp_path),
        "distill": {"epochs": 7},
        "dataset": {"n_samples": 400},
    })
    assert config.distill.epochs == 7
    assert config.distill.loss == "kl_to_targets"
    assert config.dataset.n_samples == 400


def test_negative_weight_decay_is_rejected(tmp_path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"output_dir": str(tmp_path), "train": {"weight_decay": -0.1}})
    assert "train.weight_decay" in info.value.fields


def test_unknown_and_invalid_nested_fields(tmp_path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"output_dir": str(tmp_path), "colour": "red"})
    assert info.value.fields == {"colour": "unknown field"}
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"output_dir": str(tmp_path), "rectify": {"epochs": -1}})
    assert "rectify.epochs" in info.value.fields
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"output_dir": str(tmp_path), "distill": {"loss": "cross_entropy"}})
    assert "distill.loss" in info.value.fields


def test_yaml_and_json_files(tmp_path):
    yaml_path = tmp_path / "etid.yaml"
    create_default_config_file(str(yaml_path), output_dir=str(tmp_path / "out"))
    loaded = load_config(str(yaml_path))
    assert loaded == ExperimentConfig(output_dir=str(tmp_path / "out"))
    assert yaml.safe_load(yaml_path.read_text())["config_version"] == 1

    json_path = tmp_path / "etid.json"
    json_path.write_text(json.dumps({"output_dir": "x", "k": 7}))
    assert load_config(str(json_path)).k == 7


def test_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.yaml"))
    bad = tmp_path / "etid.txt"
    bad.write_text("k: 3\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(str(listing))
    for name, text in (("broken.yaml", "k: [3,\n"), ("broken.json", "{\"k\": ")):
        broken = tmp_path / name
        broken.write_text(text)
        with pytest.raises(ConfigError) as info:
            load_config(str(broken))
        assert "config" in info.value.fields


def test_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("ETID_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("ETID_JOBS", "3")
    config = load_config(use_env=True)
    assert config.output_dir == str(tmp_path)
    assert config.jobs == 3


def test_missing_source(monkeypatch):
    monkeypatch.delenv("ETID_OUTPUT_DIR", raising=False)
    with pytest.raises(ConfigError):
        load_config()


def test_override_ignores_none(tmp_path):
    config = ExperimentConfig(output_dir=str(tmp_path))
    changed = config.override(k=7, seeds=None, parallel=False)
    assert (changed.k, changed.seeds, changed.parallel) == (7, config.seeds, False)
    with pytest.raises(ConfigError):
        config.override(unlearn_ratio=0.0)
