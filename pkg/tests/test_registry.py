import json
import os

from unlearning.storage import save_predictor
from utils.logging import close_run_logger, log_run_event, run_logger
from utils.registry import (
    load_run_registry, rebuild_run_registry, register_run, registry_path, validate_run_registry,
    write_json_atomic,
)


def test_register_stores_relative_paths(tmp_path):
    out = str(tmp_path)
    register_run(out, "etid", 0, {"report": os.path.join(out, "etid", "0", "unlearn_report.json")})
    register_run(out, "etid", 0, {"metrics": "etid/0/metrics.json"}, details={"request_size": 5})
    entry = load_run_registry(out)["etid/0"]
    assert entry["artifacts"] == {"report": os.path.join("etid", "0", "unlearn_report.json"),
                                  "metrics": "etid/0/metrics.json"}
    assert entry["details"] == {"request_size": 5}
    assert entry["seed"] == 0


def test_corrupted_registry_is_backed_up(tmp_path):
    path = registry_path(str(tmp_path))
    with open(path, "w") as f:
        f.write("{not json")
    assert load_run_registry(str(tmp_path)) == {}
    assert any(name.startswith("runs.json.bak.") for name in os.listdir(tmp_path))


def test_validate_reports_missing_and_tampered_artifacts(tmp_path, toy_ensemble):
    out = str(tmp_path)
    directory = save_predictor(toy_ensemble, os.path.join(out, "etid", "0", "unlearned"))
    register_run(out, "etid", 0, {"unlearned": directory})
    assert validate_run_registry(out) == {}

    with open(os.path.join(directory, "model_1.ckpt"), "r+b") as f:
        f.seek(40)
        f.write(b"\x01\x02\x03\x04")
    register_run(out, "sisa", 0, {"report": "sisa/0/unlearn_report.json"})
    problems = validate_run_registry(out)
    assert set(problems) == {"etid/0", "sisa/0"}
    assert any("fingerprint" in p for p in problems["etid/0"])


def test_rebuild_scans_runs_and_targets(tmp_path, toy_ensemble):
    out = str(tmp_path)
    save_predictor(toy_ensemble, os.path.join(out, "etid", "3", "unlearned"))
    write_json_atomic(os.path.join(out, "etid", "3", "unlearn_report.json"), {"request_size": 1})
    save_predictor(toy_ensemble, os.path.join(out, "targets", "etid", "3"))
    save_predictor(toy_ensemble, os.path.join(out, "oracles", "retrain_sisa", "3"))

    registry = rebuild_run_registry(out)
    assert set(registry) == {"etid/3", "target_etid/3"}
    assert set(registry["etid/3"]["artifacts"]) == {"unlearned", "report"}
    assert validate_run_registry(out) == {}


def test_run_events_accumulate(tmp_path):
    log_run_event(str(tmp_path), "unlearn", {"method": "etid"})
    log_run_event(str(tmp_path), "evaluate", {"method": "etid"})
    with open(tmp_path / "run_log.json") as f:
        events = json.load(f)
    assert [e["event_type"] for e in events] == ["unlearn", "evaluate"]


def test_run_logger_writes_its_own_file(tmp_path):
    logger, path = run_logger("etid/0", str(tmp_path))
    logger.info("distilled")
    close_run_logger(logger)
    assert os.path.basename(path) == "etid_0.log"
    with open(path) as f:
        assert "distilled" in f.read()
