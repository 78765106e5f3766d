"""
Dataset representation, synthetic generation, CSV ingestion and splitting.
"""

import csv
import os
import logging
import tempfile
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from utils.exceptions import ParseError, ValidationError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Features, labels and stable sample ids.

    Every subset used by the pipeline (train, test, unlearning, remaining) is
    another `Dataset` selected by id, so ids survive re-ordering.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        ids = np.array(self.ids, dtype=np.int64)
        if features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        if labels.shape != (n,) or ids.shape != (n,):
            raise ShapeError(f"{n} feature rows but {labels.shape[0]} labels and {ids.shape[0]} ids")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")
        if np.unique(ids).size != n:
            raise ValidationError("sample ids must be unique")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features must be finite")
        for array in (features, labels, ids):
            array.setflags(write=False)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'ids', ids)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def id_set(self) -> frozenset:
        return frozenset(int(i) for i in self.ids)

    def positions(self, ids: Iterable[int]) -> np.ndarray:
        """Row positions of `ids`, in the order given."""
        lookup = {int(i): pos for pos, i in enumerate(self.ids)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as e:
            raise ValidationError(f"unknown sample id {e.args[0]}") from None

    def select(self, ids: Iterable[int]) -> 'Dataset':
        """Subset by id, kept in ascending id order."""
        ordered = sorted(int(i) for i in ids)
        pos = self.positions(ordered)
        return Dataset(self.features[pos], self.labels[pos], self.ids[pos], self.num_classes)

    def exclude(self, ids: Iterable[int]) -> 'Dataset':
        drop = {int(i) for i in ids}
        return self.select(i for i in self.ids if int(i) not in drop)


def generate_synthetic(n: int, f: int, c: int, cluster_spread: float = 2.0, seed: int = 0) -> Dataset:
    """
    `c` Gaussian clusters with seeded centers; labels balanced within one.
    """
    if c < 2 or n < c or f < 1:
        raise ValidationError(f"need n >= c >= 2 and f >= 1, got n={n}, f={f}, c={c}")
    if cluster_spread < 0:
        raise ValidationError("cluster_spread must be >= 0")

    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(c, f))
    labels = rng.permutation(np.arange(n) % c)
    noise = rng.normal(0.0, 1.0, size=(n, f))
    features = centers[labels] + cluster_spread * noise
    return Dataset(features=features, labels=labels, ids=np.arange(n), num_classes=c)


def load_csv(path: str, num_classes: int = None) -> Dataset:
    """
    Read `id,label,f0..f{F-1}` rows. The class count defaults to max label + 1.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"CSV file not found: {path}")

    ids, labels, rows = [], [], []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1)
        header = [h.strip() for h in header]
        n_features = len(header) - 2
        expected = ['id', 'label'] + [f"f{i}" for i in range(n_features)]
        if n_features < 1 or header != expected:
            raise ParseError(f"header must be id,label,f0..f{{F-1}}, got {','.join(header)}", line=1)

        seen = set()
        for line_no, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(record)}", line=line_no)
            try:
                sample_id = int(record[0])
                label = int(record[1])
                values = [float(cell) for cell in record[2:]]
            except ValueError as e:
                raise ParseError(str(e), line=line_no) from None
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite feature value", line=line_no)
            if label < 0:
                raise ParseError(f"negative label {label}", line=line_no)
            if sample_id in seen:
                raise ValidationError(f"duplicate id {sample_id} at line {line_no}")
            seen.add(sample_id)
            ids.append(sample_id)
            labels.append(label)
            rows.append(values)

    if not rows:
        raise ParseError("no data rows", line=2)

    classes = num_classes if num_classes is not None else max(labels) + 1
    logger.info(f"Loaded {len(rows)} samples with {n_features} features from {path}")
    return Dataset(np.array(rows), np.array(labels), np.array(ids), int(classes))


def save_csv(dataset: Dataset, path: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    header = ['id', 'label'] + [f"f{i}" for i in range(dataset.num_features)]
    with tempfile.NamedTemporaryFile(mode='w', delete=False, dir=directory,
                                     newline='', encoding='utf-8') as temp_file:
        writer = csv.writer(temp_file)
        writer.writerow(header)
        for sample_id, label, row in zip(dataset.ids, dataset.labels, dataset.features):
            writer.writerow([int(sample_id), int(label)] + [repr(float(v)) for v in row])
        temp_name = temp_file.name
    os.replace(temp_name, path)
    return path


def split(d: Dataset, train_ratio: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first round(ratio * N) ids train."""
    if not 0 < train_ratio < 1:
        raise ValidationError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    n = len(d)
    n_train = int(round(train_ratio * n))
    if n_train == 0 or n_train == n:
        raise ValidationError(f"train_ratio {train_ratio} leaves an empty side for N={n}")
    order = np.random.default_rng(seed).permutation(n)
    train_ids = d.ids[order[:n_train]]
    test_ids = d.ids[order[n_train:]]
    return d.select(train_ids), d.select(test_ids)
