"""
Accuracy, consistency and timing measurements, and the per-run metrics
report.

Every function takes anything with a `predict_proba(X)` method, so single
models and ensembles share one metric path.
"""

import csv
import os
import time
import logging
import tempfile
from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import ShapeError, ValidationError

logger = logging.getLogger(__name__)


def _posteriors(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError(f"metrics need a non-empty 2-D input, got shape {X.shape}")
    return model.predict_proba(X)


def accuracy(model, X, Y) -> float:
    """Share of rows whose argmax posterior equals the label."""
    probs = _posteriors(model, X)
    Y = np.asarray(Y)
    if Y.shape != (probs.shape[0],):
        raise ShapeError(f"{Y.shape[0] if Y.ndim else 0} labels for {probs.shape[0]} rows")
    return float(np.mean(np.argmax(probs, axis=1) == Y))


def posterior_distances(model_a, model_b, X) -> np.ndarray:
    """Per-row Euclidean distance between two models' posteriors."""
    a = _posteriors(model_a, X)
    b = _posteriors(model_b, X)
    if a.shape != b.shape:
        raise ShapeError(f"posterior shapes differ: {a.shape} vs {b.shape}")
    return np.linalg.norm(a - b, axis=1)


def consistency(model_u, model_rt, X) -> float:
    """Summed L2 distance between unlearned and retrained posteriors."""
    return float(posterior_distances(model_u, model_rt, X).sum())


def consistency_mean(model_u, model_rt, X) -> float:
    return float(posterior_distances(model_u, model_rt, X).mean())


def timed(fn: Callable[[], Any]) -> Tuple[Any, float]:
    start = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - start


def time_phase(fn: Callable[[], Any]) -> float:
    """Monotonic wall-clock seconds of one call."""
    _, seconds = timed(fn)
    return seconds


SPLITS = ("remaining", "test", "unlearn")


def split_metrics(model, reference, data: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> Dict[str, float]:
    """
    Accuracy of `model` and its consistency with `reference` on every named
    (X, Y) split.
    """
    values = {}
    for name, (X, Y) in data.items():
        values[f"acc_{name}"] = accuracy(model, X, Y)
        if reference is not None:
            distances = posterior_distances(model, reference, X)
            values[f"con_{name}"] = float(distances.sum())
            values[f"con_mean_{name}"] = float(distances.mean())
    return values


@dataclass
class MetricsReport:
    """Metrics of one unlearning method on one seed."""

    method: str
    seed: int
    k: int
    unlearn_ratio: float
    acc_remaining: float
    acc_test: float
    acc_unlearn: float
    con_remaining: float
    con_test: float
    con_unlearn: float
    con_mean_remaining: float
    con_mean_test: float
    con_mean_unlearn: float
    seconds_serial: float
    seconds_parallel: Optional[float]
    m_auc_before: float
    m_auc_after: float
    delta: float
    p_value: float
    seeds: List[int] = field(default_factory=list)

    def __post_init__(self):
        if abs(self.delta - abs(self.m_auc_before - self.m_auc_after)) > 1e-12:
            raise ValidationError("delta must equal |m_auc_before - m_auc_after|")
        for name in ("acc_remaining", "acc_test", "acc_unlearn"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValidationError("p_value must lie in [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_row(self) -> Dict[str, Any]:
        row = self.to_dict()
        row['seeds'] = " ".join(str(s) for s in self.seeds)
        row['seconds_parallel'] = "" if self.seconds_parallel is None else self.seconds_parallel
        return row

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        return cls(**data)


TIMING_FIELDS = ("seconds_serial", "seconds_parallel")


def without_timing(row: Dict[str, Any]) -> Dict[str, Any]:
    """A report or summary row minus its wall-clock columns, for reproducibility checks."""
    return {name: value for name, value in row.items()
            if not any(name == t or name.startswith(f"{t}_") for t in TIMING_FIELDS)}

METRIC_FIELDS = tuple(f for f in MetricsReport.__dataclass_fields__
                      if f not in ("method", "seed", "k", "unlearn_ratio", "seeds"))


def write_csv(rows: Sequence[Dict[str, Any]], path: str, columns: Optional[Sequence[str]] = None) -> str:
    """Atomically write dict rows; columns default to the first row's keys."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with tempfile.NamedTemporaryFile(mode='w', delete=False, dir=directory,
                                     newline='', encoding='utf-8') as temp_file:
        writer = csv.DictWriter(temp_file, fieldnames=list(columns), extrasaction='ignore')
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        temp_name = temp_file.name
    os.replace(temp_name, path)
    return path


def summarize(rows: Iterable[Dict[str, Any]], group_by: Sequence[str] = ("method",)) -> List[Dict[str, Any]]:
    """Mean and sample standard deviation of every metric over seeds, per group."""
    groups: Dict[Tuple, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault(tuple(row[g] for g in group_by), []).append(row)

    summary = []
    for key, members in groups.items():
        entry: Dict[str, Any] = dict(zip(group_by, key))
        entry['n_seeds'] = len(members)
        for name in METRIC_FIELDS:
            values = np.array([float(m[name]) for m in members
                               if m.get(name) not in (None, "")], dtype=np.float64)
            if values.size == 0:
                entry[f"{name}_mean"] = entry[f"{name}_std"] = ""
                continue
            entry[f"{name}_mean"] = float(values.mean())
            entry[f"{name}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        summary.append(entry)
    return summary
