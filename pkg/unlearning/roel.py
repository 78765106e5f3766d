"""
Reference-oriented ensemble learning.

K sub-models, sub-model i trained on every part except part i (D_{-i}); the
ensemble prediction is the plain average of the sub-model posteriors. Any
sub-model is a retrained-alike stand-in for the others as long as the
shared-versus-unique sample ratio between their effective training sets
stays at or above one.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import TrainConfig
from data.dataset import Dataset
from data.partition import PartitionMap, partition, build_subset
from models.mlp import MlpModel, init_model, train, as_matrix
from utils.exceptions import QuarantineViolation, ShapeError, ValidationError
from utils.parallel import run_jobs
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

ENSEMBLE_KINDS = ("roel", "sisa")

# Returned by delta_alike for identical training sets
IDENTICAL = math.inf


@dataclass
class Ensemble:
    """
    Sub-models, the partition they were built from and the erasure ledger.

    `training_ids[i]` is the id set sub-model i was last trained from
    scratch on; `unlearned_ledger[p]` holds the erased ids of part p.
    """

    kind: str
    sub_models: List[MlpModel]
    partition: PartitionMap
    train_config: TrainConfig
    unlearned_ledger: List[frozenset] = field(default_factory=list)
    training_ids: List[frozenset] = field(default_factory=list)
    requests_handled: int = 0

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValidationError(f"unknown ensemble kind '{self.kind}'")
        if not self.unlearned_ledger:
            self.unlearned_ledger = [frozenset() for _ in range(self.partition.k)]
        if len(self.sub_models) != self.partition.k or len(self.unlearned_ledger) != self.partition.k:
            raise ValidationError(
                f"{len(self.sub_models)} sub-models and {len(self.unlearned_ledger)} ledger parts "
                f"for a {self.partition.k}-part partition")
        sizes = {tuple(m.layer_sizes) for m in self.sub_models}
        if len(sizes) != 1:
            raise ShapeError(f"sub-models disagree on layer sizes: {sorted(sizes)}")
        for p, erased in enumerate(self.unlearned_ledger):
            stray = frozenset(erased) - self.partition.part(p)
            if stray:
                raise ValidationError(f"ledger of part {p} holds {len(stray)} ids outside that part")
        self.unlearned_ledger = [frozenset(int(i) for i in erased) for erased in self.unlearned_ledger]

    @property
    def k(self) -> int:
        return self.partition.k

    @property
    def layer_sizes(self) -> List[int]:
        return list(self.sub_models[0].layer_sizes)

    def ledger_ids(self) -> frozenset:
        return frozenset().union(*self.unlearned_ledger)

    def base_training_ids(self, i: int) -> frozenset:
        """Ids sub-model i was built on: D_{-i} for ROEL, d_i for shards."""
        if self.kind == "roel":
            return self.partition.ids() - self.partition.part(i)
        return self.partition.part(i)

    def effective_training_ids(self, i: int) -> frozenset:
        return self.base_training_ids(i) - self.ledger_ids()

    def predict_proba(self, X) -> np.ndarray:
        return predict(self, X)

    def fingerprints(self) -> List[str]:
        return [m.fingerprint() for m in self.sub_models]


def member_layer_sizes(train: Dataset, hidden_layers: Sequence[int]) -> List[int]:
    return [train.num_features] + [int(h) for h in hidden_layers] + [train.num_classes]


def fit_member(train: Dataset, ids: Iterable[int], layer_sizes: Sequence[int],
               cfg: TrainConfig, index: int) -> Tuple[MlpModel, frozenset]:
    """
    Train sub-model `index` from scratch on `ids`. Initialisation and batch
    order are seeded from (cfg.seed, index) only.
    """
    subset = train.select(ids)
    if len(subset) == 0:
        raise ValidationError(f"sub-model {index} has no training samples")
    model = init_model(layer_sizes, derive_seed(cfg.seed, 1, index))
    fitted = train_model(model, subset, cfg.with_seed(derive_seed(cfg.seed, 2, index)))
    return fitted, subset.id_set()


def train_model(model: MlpModel, data: Dataset, cfg: TrainConfig) -> MlpModel:
    return train(model, data.features, data.labels, cfg, ids=data.ids)


def build(train: Dataset, k: int, cfg: TrainConfig, hidden_layers: Sequence[int] = (64, 32),
          parallel: bool = False, max_workers: Optional[int] = None) -> Ensemble:
    """Partition `train` into K parts and fit sub-model i on D_{-i}."""
    ensemble, _ = build_timed(train, k, cfg, hidden_layers, parallel=parallel, max_workers=max_workers)
    return ensemble


def build_timed(train: Dataset, k: int, cfg: TrainConfig, hidden_layers: Sequence[int] = (64, 32),
                parallel: bool = False, max_workers: Optional[int] = None) -> Tuple[Ensemble, List[float]]:
    """`build`, also returning the seconds each sub-model took."""
    parts = partition(train, k, cfg.seed)
    layer_sizes = member_layer_sizes(train, hidden_layers)
    logger.info(f"Building ROEL ensemble: K={k}, N={len(train)}, part sizes {parts.part_sizes}")

    def job(i):
        return fit_member(train, build_subset(train, parts, i), layer_sizes, cfg, i)

    results = run_jobs(job, range(k), parallel=parallel, max_workers=max_workers)
    sub_models = [model for (model, _), _ in results]
    training_ids = [ids for (_, ids), _ in results]
    for i, ids in enumerate(training_ids):
        if ids & parts.part(i):
            raise QuarantineViolation(f"sub-model {i} saw ids of its own part")

    ensemble = Ensemble(kind="roel", sub_models=sub_models, partition=parts, train_config=cfg,
                        training_ids=training_ids)
    return ensemble, [seconds for _, seconds in results]


def rebuild(train: Dataset, e: Ensemble, parallel: bool = False,
            max_workers: Optional[int] = None) -> Ensemble:
    """Fresh ROEL ensemble on the remaining data D \\ ledger, same K and config."""
    remaining = train.exclude(e.ledger_ids())
    hidden = e.layer_sizes[1:-1]
    logger.info(f"Rebuilding ensemble on {len(remaining)} remaining samples "
                f"({len(e.ledger_ids())} erased)")
    return build(remaining, e.k, e.train_config, hidden, parallel=parallel, max_workers=max_workers)


def predict(e: Ensemble, X) -> np.ndarray:
    """Elementwise mean of the K sub-model posteriors."""
    X = as_matrix(X, e.sub_models[0].input_dim)
    stacked = np.stack([m.predict_proba(X) for m in e.sub_models])
    return stacked.mean(axis=0)


def delta_alike(ids_a: Iterable[int], ids_b: Iterable[int]) -> float:
    """
    Shared samples over the larger count of unique samples. Identical sets
    return IDENTICAL.
    """
    a, b = frozenset(ids_a), frozenset(ids_b)
    if not a or not b:
        raise ValidationError("delta_alike needs two non-empty training sets")
    shared = len(a & b)
    unique = max(len(a) - shared, len(b) - shared)
    if unique == 0:
        return IDENTICAL
    return shared / unique


def is_retrained_alike(e: Ensemble, ref_part: int, target_part: int,
                       pending_unlearn: Iterable[int] = ()) -> Tuple[bool, float]:
    """
    Whether the reference of part `ref_part` still stands in for the
    retrained version of sub-model `target_part` once `pending_unlearn`
    (ids of `ref_part`) is erased.
    """
    i, j = int(ref_part), int(target_part)
    for idx in (i, j):
        if not 0 <= idx < e.k:
            raise ValidationError(f"part index {idx} out of range [0, {e.k})")
    if i == j:
        raise ValidationError("reference and target part must differ")
    if e.kind != "roel":
        raise ValidationError("retrained-alike references exist only in ROEL ensembles")

    pending = frozenset(int(s) for s in pending_unlearn)
    outside = pending - e.partition.part(i)
    if outside:
        raise ValidationError(f"{len(outside)} pending ids are not in part {i}")

    erased = e.ledger_ids()
    reference_ids = e.base_training_ids(i) - erased
    retrained_ids = e.base_training_ids(j) - erased - pending
    if not reference_ids or not retrained_ids:
        raise ValidationError(
            f"pair ({i},{j}) has an empty effective training set; rebuild the ensemble")

    ratio = delta_alike(reference_ids, retrained_ids)
    return ratio >= 1.0, ratio


def with_ledger(e: Ensemble, erased: Iterable[int]) -> Ensemble:
    """Copy of `e` with `erased` ids added to the ledger of their parts."""
    ledger = [set(p) for p in e.unlearned_ledger]
    for sample_id in erased:
        ledger[e.partition.part_of(sample_id)].add(int(sample_id))
    return replace(e, sub_models=list(e.sub_models), unlearned_ledger=[frozenset(p) for p in ledger],
                   training_ids=list(e.training_ids))
