import csv
import json
import os

import pytest
import yaml

import main
from evaluation.metrics import without_timing
from unlearning.storage import load_ensemble


def _write_config(tmp_path, **overrides):
    data = {
        "output_dir": str(tmp_path / "out"),
        "dataset": {"n_samples": 300, "n_features": 4, "n_classes": 3, "cluster_spread": 0.5},
        "k": 3,
        "unlearn_ratio": 0.05,
        "hidden_layers": [8],
        "attack_hidden": 8,
        "train": {"learning_rate": 0.1, "epochs": 3, "batch_size": 32},
        "distill": {"epochs": 3, "batch_size": 16},
        "rectify": {"epochs": 1},
        "relabel": {"epochs": 2},
        "attack": {"epochs": 3},
        "seeds": [0],
        "mia_repeats": 2,
        "parallel": False,
    }
    data.update(overrides)
    path = tmp_path / "etid.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path), data["output_dir"]


def _read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_create_config(tmp_path):
    path = str(tmp_path / "default.yaml")
    assert main.main(["--create-config", path]) == 0
    assert yaml.safe_load((tmp_path / "default.yaml").read_text())["k"] == 5


@pytest.mark.slow
def test_full_pipeline(tmp_path):
    config_path, out = _write_config(tmp_path)
    assert main.main(["run", "--config", config_path]) == 0

    rows = _read_csv(os.path.join(out, "results.csv"))
    assert sorted(r["method"] for r in rows) == sorted(main.METHODS)
    assert len(_read_csv(os.path.join(out, "summary.csv"))) == 5
    assert len(_read_csv(os.path.join(out, "targets", "accuracy.csv"))) == 3
    for method in main.METHODS:
        assert os.path.exists(os.path.join(out, method, "0", "metrics.json"))
    assert os.path.exists(os.path.join(out, "oracles", "retrain_sisa", "0", "manifest.json"))

    assert main.main(["--config", config_path, "--validate-registry"]) == 0
    assert main.main(["--config", config_path, "--rebuild-registry"]) == 0
    assert main.main(["--config", config_path, "--validate-registry"]) == 0


def test_invalid_configuration_exits_with_two(tmp_path, capsys):
    config_path, _ = _write_config(tmp_path, k=2)
    assert main.main(["gen-data", "--config", config_path]) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError"
    assert "k" in record["fields"]


def test_command_line_overrides_are_validated(tmp_path, capsys):
    config_path, _ = _write_config(tmp_path)
    assert main.main(["gen-data", "--config", config_path, "--unlearn-ratio", "1.5"]) == 2


def test_unknown_request_ids_exit_with_two(tmp_path, capsys):
    config_path, _ = _write_config(tmp_path)
    request = tmp_path / "req.txt"
    request.write_text("100000\n")
    assert main.main(["gen-data", "--config", config_path, "--request", str(request)]) == 2


def test_malformed_config_file_exits_with_two(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("k: [3,\n")
    assert main.main(["gen-data", "--config", str(path)]) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError"
    assert record["exit_code"] == 2
    assert "config" in record["fields"]


def test_corrupt_split_file_exits_with_two(tmp_path, capsys):
    config_path, out = _write_config(tmp_path)
    assert main.main(["gen-data", "--config", config_path]) == 0
    with open(os.path.join(out, "data", "seed_0", "split.json"), "w") as f:
        f.write("{\"train_ids\": [1, 2")
    assert main.main(["gen-data", "--config", config_path]) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == 2
    assert "split" in record["message"]


def test_missing_targets_exit_with_two(tmp_path, capsys):
    config_path, _ = _write_config(tmp_path, methods=["relabel"])
    assert main.main(["gen-data", "--config", config_path]) == 0
    assert main.main(["unlearn", "--config", config_path]) == 2
    assert "train command" in capsys.readouterr().err


@pytest.mark.slow
def test_chained_requests_until_rebuild_needed(tmp_path, capsys):
    config_path, out = _write_config(tmp_path, methods=["etid"])
    assert main.main(["gen-data", "--config", config_path]) == 0
    assert main.main(["train", "--config", config_path]) == 0

    target = load_ensemble(os.path.join(out, "targets", "etid", "0"))
    part2, part0 = sorted(target.partition.part(2)), sorted(target.partition.part(0))
    half = len(part2) // 2
    for n, ids in enumerate((part2[:half], part2[half:], part0[:5])):
        request = tmp_path / f"req_{n}.txt"
        request.write_text("\n".join(str(i) for i in ids) + "\n")
        code = main.main(["unlearn", "--config", config_path, "--request", str(request), "--chain"])
        assert code == (3 if n == 2 else 0)

    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ValidityExpired"
    assert record["exit_code"] == 3
    assert record["failing_pairs"]["0,1"] == 0.0

    latest = load_ensemble(os.path.join(out, "etid", "0", "unlearned"))
    assert latest.requests_handled == 2
    assert latest.unlearned_ledger[2] == target.partition.part(2)
    with open(os.path.join(out, "requests", "seed_0.txt")) as f:
        assert len(f.read().split()) == len(part2)


@pytest.mark.slow
def test_bench_and_sweep(tmp_path):
    config_path, out = _write_config(
        tmp_path, methods=["etid", "retrain_ensemble"],
        sweep={"k_values": [3], "unlearn_ratios": [0.05, 0.1]})
    assert main.main(["run", "--config", config_path]) == 0
    assert main.main(["bench", "--config", config_path]) == 0
    modes = [(r["method"], r["mode"]) for r in _read_csv(os.path.join(out, "bench.csv"))]
    assert ("etid", "parallel") in modes and ("retrain_single", "serial") in modes
    assert len(modes) == 5
    for row in _read_csv(os.path.join(out, "bench.csv")):
        assert float(row["seconds_call"]) >= float(row["seconds_wall"])

    assert main.main(["sweep", "--config", config_path]) == 0
    rows = _read_csv(os.path.join(out, "sweep.csv"))
    assert len(rows) == 4
    assert {r["UR"] for r in rows} == {"0.05", "0.1"}
    assert os.path.isdir(os.path.join(out, "sweep", "K3_UR0.1"))


# Execution-mode and wall-clock entries of unlearn_report.json
RUN_TIMING_KEYS = ("seconds_wall", "phase_seconds", "parallel")


def _stable_outputs(out):
    """Every artifact of a run except bookkeeping, logs and wall-clock fields."""
    files = {}
    for root, _, names in os.walk(out):
        for name in names:
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out)
            if rel.startswith("logs") or name in ("runs.json", "run_log.json"):
                continue
            if name == "unlearn_report.json":
                with open(path) as f:
                    report = without_timing(json.load(f))
                files[rel] = {k: v for k, v in report.items() if k not in RUN_TIMING_KEYS}
            elif name == "metrics.json":
                with open(path) as f:
                    files[rel] = without_timing(json.load(f))
            elif name.endswith(".csv"):
                files[rel] = [without_timing(row) for row in _read_csv(path)]
            else:
                with open(path, "rb") as f:
                    files[rel] = f.read()
    return files


@pytest.mark.slow
def test_reruns_reproduce_every_artifact(tmp_path):
    outputs = []
    for name, parallel in (("a", False), ("b", False), ("c", True)):
        (tmp_path / name).mkdir()
        config_path, out = _write_config(tmp_path / name, parallel=parallel)
        assert main.main(["run", "--config", config_path]) == 0
        outputs.append(_stable_outputs(out))

    assert outputs[0] == outputs[1]
    assert outputs[0] == outputs[2]
    assert any(name.endswith(".ckpt") for name in outputs[0])
