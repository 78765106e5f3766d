"""
Comparison methods: retraining from scratch, shard-per-model ensembles
with partial retraining, and random-label fine-tuning.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import TrainConfig
from data.dataset import Dataset
from data.partition import UnlearnRequest, group_by_part, shard
from evaluation.metrics import timed
from models.mlp import MlpModel, train
from unlearning.roel import Ensemble, build, build_timed, fit_member, member_layer_sizes, with_ledger
from utils.exceptions import ValidationError
from utils.parallel import run_jobs
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    RETRAIN_SINGLE = "retrain_single"
    RETRAIN_ENSEMBLE = "retrain_ensemble"
    SISA = "sisa"
    RELABEL = "relabel"


@dataclass
class BaselineReport:
    """Timing and bookkeeping of one baseline unlearning run."""

    method: str
    request_size: int
    seconds_serial: float
    seconds_wall: float
    retrained: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'method': self.method,
            'request_size': self.request_size,
            'seconds_serial': self.seconds_serial,
            'seconds_wall': self.seconds_wall,
            'retrained': list(self.retrained),
        }


def _require_samples(data: Dataset, what: str):
    if len(data) == 0:
        raise ValidationError(f"{what} is empty")


def train_single(train_data: Dataset, cfg: TrainConfig, hidden_layers: Sequence[int]) -> MlpModel:
    """One model on all of `train_data`, seeded like sub-model 0 of an ensemble."""
    _require_samples(train_data, "training data")
    model, _ = fit_member(train_data, train_data.ids, member_layer_sizes(train_data, hidden_layers), cfg, 0)
    return model


def retrain_single(remaining: Dataset, cfg: TrainConfig, hidden_layers: Sequence[int]) -> MlpModel:
    """Naive retraining from scratch on D^r."""
    _require_samples(remaining, "remaining data")
    return train_single(remaining, cfg, hidden_layers)


def retrain_ensemble(remaining: Dataset, k: int, cfg: TrainConfig, hidden_layers: Sequence[int],
                     parallel: bool = False, max_workers: Optional[int] = None) -> Ensemble:
    """ROEL ensemble rebuilt from scratch on D^r."""
    _require_samples(remaining, "remaining data")
    return build(remaining, k, cfg, hidden_layers, parallel=parallel, max_workers=max_workers)


def sisa_build(train_data: Dataset, k: int, cfg: TrainConfig, hidden_layers: Sequence[int],
               parallel: bool = False, max_workers: Optional[int] = None) -> Ensemble:
    """Sub-model i trained on shard d_i only."""
    shards = shard(train_data, k, cfg.seed)
    layer_sizes = member_layer_sizes(train_data, hidden_layers)
    logger.info(f"Building SISA ensemble: K={k}, shard sizes {shards.part_sizes}")

    results = run_jobs(lambda i: fit_member(train_data, shards.part(i), layer_sizes, cfg, i),
                       range(k), parallel=parallel, max_workers=max_workers)
    return Ensemble(kind="sisa", sub_models=[m for (m, _), _ in results], partition=shards,
                    train_config=cfg, training_ids=[ids for (_, ids), _ in results])


def sisa_unlearn(e: Ensemble, train_data: Dataset, req: UnlearnRequest, parallel: bool = False,
                 max_workers: Optional[int] = None) -> Tuple[Ensemble, BaselineReport]:
    """Retrain from scratch exactly the shards the request touches."""
    if e.kind != "sisa":
        raise ValidationError("sisa_unlearn needs a SISA ensemble")
    req.validate_against(train_data, e.ledger_ids())
    unknown = req.sample_ids - e.partition.ids()
    if unknown:
        raise ValidationError(f"{len(unknown)} requested ids are outside the shards")

    groups = group_by_part(req, e.partition)
    affected = [i for i, g in enumerate(groups) if g]
    updated = with_ledger(e, req.sample_ids)
    erased = updated.ledger_ids()
    for i in affected:
        if not e.partition.part(i) - erased:
            raise ValidationError(f"request empties shard {i}")

    def job(i):
        return fit_member(train_data, e.partition.part(i) - erased, e.layer_sizes, e.train_config, i)

    results, wall = timed(lambda: run_jobs(job, affected, parallel=parallel, max_workers=max_workers))
    sub_models = list(e.sub_models)
    training_ids = list(e.training_ids)
    for i, ((model, ids), _) in zip(affected, results):
        sub_models[i] = model
        training_ids[i] = ids

    unlearned = replace(updated, sub_models=sub_models, training_ids=training_ids,
                        requests_handled=e.requests_handled + 1)
    logger.info(f"SISA retrained shards {affected} for {len(req)} ids")
    report = BaselineReport(method=BaselineKind.SISA.value, request_size=len(req),
                            seconds_serial=float(sum(s for _, s in results)), seconds_wall=float(wall),
                            retrained=affected)
    return unlearned, report


def random_relabel(labels: np.ndarray, num_classes: int, seed: int) -> np.ndarray:
    """Uniform random labels, each different from the true one."""
    if num_classes < 2:
        raise ValidationError("relabelling needs at least two classes")
    labels = np.asarray(labels, dtype=np.int64)
    offsets = np.random.default_rng(seed).integers(1, num_classes, size=labels.shape[0])
    return (labels + offsets) % num_classes


Predictor = Union[MlpModel, Ensemble]


def relabel_unlearn(predictor: Predictor, unlearn: Dataset, cfg: TrainConfig) -> Predictor:
    """
    Fine-tune on D^u with random wrong labels. Ensembles fine-tune every
    sub-model and record D^u in the ledger.
    """
    _require_samples(unlearn, "unlearning data")
    wrong = random_relabel(unlearn.labels, unlearn.num_classes, cfg.seed)

    if isinstance(predictor, MlpModel):
        return train(predictor, unlearn.features, wrong, cfg)

    sub_models = [train(m, unlearn.features, wrong, cfg.with_seed(derive_seed(cfg.seed, j)))
                  for j, m in enumerate(predictor.sub_models)]
    updated = with_ledger(predictor, unlearn.ids)
    return replace(updated, sub_models=sub_models, requests_handled=predictor.requests_handled + 1)


def run_retrain_single(train_data: Dataset, req: UnlearnRequest, cfg: TrainConfig,
                       hidden_layers: Sequence[int]) -> Tuple[MlpModel, BaselineReport]:
    req.validate_against(train_data)
    model, seconds = timed(lambda: retrain_single(train_data.exclude(req.sample_ids), cfg, hidden_layers))
    return model, BaselineReport(method=BaselineKind.RETRAIN_SINGLE.value, request_size=len(req),
                                 seconds_serial=float(seconds), seconds_wall=float(seconds), retrained=[0])


def run_retrain_ensemble(train_data: Dataset, req: UnlearnRequest, k: int, cfg: TrainConfig,
                         hidden_layers: Sequence[int], parallel: bool = False,
                         max_workers: Optional[int] = None) -> Tuple[Ensemble, BaselineReport]:
    req.validate_against(train_data)
    remaining = train_data.exclude(req.sample_ids)
    _require_samples(remaining, "remaining data")
    (ensemble, job_seconds), wall = timed(
        lambda: build_timed(remaining, k, cfg, hidden_layers, parallel=parallel, max_workers=max_workers))
    return ensemble, BaselineReport(method=BaselineKind.RETRAIN_ENSEMBLE.value, request_size=len(req),
                                    seconds_serial=float(sum(job_seconds)), seconds_wall=float(wall),
                                    retrained=list(range(k)))


def run_relabel(target: Predictor, train_data: Dataset, req: UnlearnRequest,
                cfg: TrainConfig) -> Tuple[Predictor, BaselineReport]:
    req.validate_against(train_data)
    unlearned, seconds = timed(lambda: relabel_unlearn(target, train_data.select(req.sample_ids), cfg))
    return unlearned, BaselineReport(method=BaselineKind.RELABEL.value, request_size=len(req),
                                     seconds_serial=float(seconds), seconds_wall=float(seconds))
