import csv
import math

import numpy as np
import pytest

from conftest import FixedPosteriors
from evaluation.metrics import (
    METRIC_FIELDS, MetricsReport, accuracy, consistency, consistency_mean, posterior_distances,
    TIMING_FIELDS, split_metrics, summarize, time_phase, timed, without_timing, write_csv,
)
from utils.exceptions import ShapeError, ValidationError


def _report(**overrides):
    values = dict(
        method="etid", seed=0, k=5, unlearn_ratio=0.01,
        acc_remaining=0.9, acc_test=0.8, acc_unlearn=0.85,
        con_remaining=1.0, con_test=0.5, con_unlearn=0.1,
        con_mean_remaining=0.01, con_mean_test=0.02, con_mean_unlearn=0.03,
        seconds_serial=2.0, seconds_parallel=0.7,
        m_auc_before=0.6, m_auc_after=0.52, delta=0.08, p_value=0.03, seeds=[1, 2],
    )
    values.update(overrides)
    return MetricsReport(**values)


def test_opposite_posteriors_are_root_two_apart():
    X = np.zeros((1, 2))
    assert consistency(FixedPosteriors([[1, 0]]), FixedPosteriors([[0, 1]]), X) == pytest.approx(math.sqrt(2))


def test_consistency_sums_and_averages_rows():
    a = FixedPosteriors([[1, 0], [0.5, 0.5], [0.2, 0.8]])
    b = FixedPosteriors([[0, 1], [0.5, 0.5], [0.2, 0.8]])
    X = np.zeros((3, 2))
    assert consistency(a, b, X) == pytest.approx(math.sqrt(2))
    assert consistency_mean(a, b, X) == pytest.approx(math.sqrt(2) / 3)
    assert consistency(a, a, X) == 0.0


def test_consistency_triangle_inequality():
    rng = np.random.default_rng(0)
    X = np.zeros((20, 1))
    for _ in range(50):
        a, b, c = (FixedPosteriors(rng.dirichlet(np.ones(4), size=20)) for _ in range(3))
        assert consistency(a, c, X) <= consistency(a, b, X) + consistency(b, c, X) + 1e-12


def test_accuracy_counts_argmax_hits():
    model = FixedPosteriors([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    assert accuracy(model, np.zeros((4, 1)), [0, 1, 0, 0]) == 0.75


def test_metric_input_checks():
    model = FixedPosteriors([[1, 0], [0, 1]])
    with pytest.raises(ValidationError):
        accuracy(model, np.zeros((0, 1)), [])
    with pytest.raises(ShapeError):
        accuracy(model, np.zeros((2, 1)), [0, 1, 1])
    with pytest.raises(ShapeError):
        posterior_distances(model, FixedPosteriors([[1, 0, 0], [0, 1, 0]]), np.zeros((2, 1)))


def test_split_metrics_keys(toy_ensemble, toy_data):
    data = {"test": (toy_data.features[:10], toy_data.labels[:10])}
    values = split_metrics(toy_ensemble, toy_ensemble, data)
    assert set(values) == {"acc_test", "con_test", "con_mean_test"}
    assert values["con_test"] == 0.0
    assert set(split_metrics(toy_ensemble, None, data)) == {"acc_test"}


def test_timed_returns_result():
    result, seconds = timed(lambda: 41 + 1)
    assert result == 42
    assert seconds >= 0


def test_time_phase_of_a_no_op():
    seconds = time_phase(lambda: None)
    assert 0 <= seconds < 0.01


def test_without_timing_drops_only_wall_clock_fields():
    row = _report().to_row()
    stable = without_timing(row)
    assert set(row) - set(stable) == set(TIMING_FIELDS)
    assert stable["acc_test"] == row["acc_test"]


def test_report_requires_consistent_delta():
    assert _report().to_dict()["delta"] == 0.08
    with pytest.raises(ValidationError, match="delta"):
        _report(delta=0.5)
    with pytest.raises(ValidationError):
        _report(acc_test=1.5)
    with pytest.raises(ValidationError):
        _report(p_value=-0.1)


def test_report_row_form():
    row = _report(seconds_parallel=None).to_row()
    assert row["seeds"] == "1 2"
    assert row["seconds_parallel"] == ""
    assert MetricsReport.from_dict(_report().to_dict()) == _report()


def test_write_csv(tmp_path):
    rows = [_report().to_row(), _report(seed=1).to_row()]
    path = write_csv(rows, str(tmp_path / "out" / "results.csv"))
    with open(path) as f:
        read = list(csv.DictReader(f))
    assert [r["seed"] for r in read] == ["0", "1"]
    assert set(METRIC_FIELDS) <= set(read[0])


def test_summarize_mean_and_sample_std():
    rows = [_report(seed=s, acc_test=acc).to_row() for s, acc in enumerate([0.7, 0.8, 0.9])]
    rows.append(_report(method="sisa", seed=0).to_row())
    summary = {entry["method"]: entry for entry in summarize(rows)}
    assert summary["etid"]["n_seeds"] == 3
    assert summary["etid"]["acc_test_mean"] == pytest.approx(0.8)
    assert summary["etid"]["acc_test_std"] == pytest.approx(0.1)
    assert summary["sisa"]["acc_test_std"] == 0.0
    assert summary["etid"]["seconds_parallel_mean"] == pytest.approx(0.7)


def test_summarize_skips_missing_values():
    rows = [_report(seconds_parallel=None).to_row()]
    assert summarize(rows)[0]["seconds_parallel_mean"] == ""
