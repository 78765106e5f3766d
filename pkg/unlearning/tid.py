"""
Iterative information distillation.

One unlearning request against a ROEL ensemble runs as

    init_session -> unlearn_subset (per non-empty part, ascending) -> rectify
    -> update_references_and_ledger

References are snapshots of the sub-models taken at init. Sub-models other
than i learn the reference's posteriors on d_i^u by KL distillation; every
sub-model is then fine-tuned on its own remaining data, and the request is
added to the ledger.
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from config.settings import TrainConfig
from data.dataset import Dataset
from data.partition import UnlearnRequest, group_by_part
from evaluation.metrics import consistency, timed
from models.mlp import MlpModel, TrainHistory, train_with_history
from unlearning.roel import Ensemble, is_retrained_alike, with_ledger
from utils.exceptions import QuarantineViolation, ReferenceChanged, ValidationError, ValidityExpired
from utils.parallel import run_jobs
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class UnlearnSession:
    """State of one in-flight request."""

    request: UnlearnRequest
    groups: List[frozenset]
    references: Dict[int, MlpModel]
    distill_config: TrainConfig
    rectify_config: TrainConfig
    validity: Dict[Tuple[int, int], float] = field(default_factory=dict)
    snapshot_fingerprints: Dict[int, str] = field(default_factory=dict)

    @property
    def active_parts(self) -> List[int]:
        return [i for i, g in enumerate(self.groups) if g]


@dataclass
class UnlearnReport:
    request_size: int
    group_sizes: List[int]
    validity: Dict[Tuple[int, int], float]
    iterations: int
    targets_per_iteration: Dict[int, List[int]]
    distill_objectives: Dict[Tuple[int, int], Tuple[float, float]]
    phase_seconds: Dict[str, Dict[str, float]]
    parallel: bool
    audited_batches: int
    ledger_total: int
    output_shift: Dict[int, float]

    @property
    def seconds_serial(self) -> float:
        """Summed per-job time: the cost of running every job one after another."""
        return sum(p['serial'] for p in self.phase_seconds.values())

    @property
    def seconds_wall(self) -> float:
        return sum(p['wall'] for p in self.phase_seconds.values())

    def to_dict(self) -> Dict:
        return {
            'request_size': self.request_size,
            'group_sizes': list(self.group_sizes),
            'validity': {f"{i},{j}": r for (i, j), r in sorted(self.validity.items())},
            'iterations': self.iterations,
            'targets_per_iteration': {str(i): t for i, t in sorted(self.targets_per_iteration.items())},
            'distill_objectives': {f"{i},{j}": {'before': b, 'after': a}
                                   for (i, j), (b, a) in sorted(self.distill_objectives.items())},
            'phase_seconds': self.phase_seconds,
            'seconds_serial': self.seconds_serial,
            'seconds_wall': self.seconds_wall,
            'parallel': self.parallel,
            'audited_batches': self.audited_batches,
            'ledger_total': self.ledger_total,
            'output_shift': {str(j): v for j, v in sorted(self.output_shift.items())},
        }


def init_session(e: Ensemble, req: UnlearnRequest, distill_cfg: TrainConfig,
                 rectify_cfg: TrainConfig) -> UnlearnSession:
    """
    Group the request by part, check every (reference, target) pair and
    snapshot the references. Nothing in `e` is modified.
    """
    if e.kind != "roel":
        raise ValidationError("iterative distillation needs a ROEL ensemble")

    unknown = req.sample_ids - e.partition.ids()
    if unknown:
        raise ValidationError(f"{len(unknown)} requested ids are not training samples, e.g. {min(unknown)}")
    repeated = req.sample_ids & e.ledger_ids()
    if repeated:
        raise ValidationError(f"{len(repeated)} requested ids were already erased, e.g. {min(repeated)}")

    groups = group_by_part(req, e.partition)
    validity: Dict[Tuple[int, int], float] = {}
    failing: Dict[Tuple[int, int], float] = {}
    for i, group in enumerate(groups):
        if not group:
            continue
        for j in range(e.k):
            if j == i:
                continue
            ok, ratio = is_retrained_alike(e, i, j, group)
            validity[(i, j)] = ratio
            if not ok:
                failing[(i, j)] = ratio

    if failing:
        logger.error(f"Retrained-alike check failed for {len(failing)} pairs; aborting before any update")
        raise ValidityExpired(failing)

    references = {i: e.sub_models[i].copy() for i, g in enumerate(groups) if g}
    session = UnlearnSession(
        request=req,
        groups=groups,
        references=references,
        distill_config=distill_cfg,
        rectify_config=rectify_cfg,
        validity=validity,
        snapshot_fingerprints={i: e.sub_models[i].fingerprint() for i in references},
    )
    logger.info(f"Unlearning session: {len(req)} ids over parts {session.active_parts}, "
                f"min ratio {min(validity.values()) if validity else float('inf'):.3f}")
    return session


def unlearn_subset(targets: Mapping[int, MlpModel], ref: MlpModel, X: np.ndarray, cfg: TrainConfig,
                   ref_part: int, request_index: int = 0, parallel: bool = False,
                   max_workers: Optional[int] = None
                   ) -> Tuple[Dict[int, MlpModel], Dict[int, TrainHistory], List[float]]:
    """
    Distill `ref`'s posteriors on X into every target. A target whose
    objective would rise keeps its input parameters.
    """
    if ref_part in targets:
        raise ValidationError(f"sub-model {ref_part} cannot distill from its own reference")
    if len(X) == 0:
        raise ValidationError("distillation needs at least one unlearning sample")
    if cfg.loss != "kl_to_targets":
        raise ValidationError("distillation uses the kl_to_targets loss")

    soft = ref.predict_proba(X)
    order = sorted(targets)

    def job(j):
        job_cfg = cfg.with_seed(derive_seed(cfg.seed, request_index, ref_part, j))
        model, history = train_with_history(targets[j], X, soft, job_cfg)
        if history.final > history.initial:
            history.returned_loss = history.initial
            model = targets[j].copy()
        return model, history

    results = run_jobs(job, order, parallel=parallel, max_workers=max_workers)
    updated = {j: results[n][0][0] for n, j in enumerate(order)}
    histories = {j: results[n][0][1] for n, j in enumerate(order)}
    for j in order:
        logger.debug(f"Distilled {ref_part}->{j}: KL {histories[j].initial:.3e} -> {histories[j].final:.3e}")
    return updated, histories, [seconds for _, seconds in results]


def remaining_sets(e: Ensemble, train: Dataset, req: UnlearnRequest) -> List[Dataset]:
    """D^r_{-j} = D_{-j} \\ (ledger ∪ request) for every sub-model."""
    erased = e.ledger_ids() | req.sample_ids
    return [train.select(e.base_training_ids(j) - erased) for j in range(e.k)]


def rectify(e: Ensemble, remaining: List[Dataset], cfg: TrainConfig, quarantine: frozenset,
            request_index: int = 0, parallel: bool = False, max_workers: Optional[int] = None
            ) -> Tuple[Ensemble, List[float], int]:
    """
    Cross-entropy fine-tuning of every sub-model on its own remaining data.
    Every batch is checked against `quarantine`.

    Returns the rectified ensemble, per-job seconds and the number of audited batches.
    """
    if len(remaining) != e.k:
        raise ValidationError(f"{len(remaining)} remaining sets for {e.k} sub-models")
    for j, data in enumerate(remaining):
        if len(data) == 0:
            raise ValidationError(f"sub-model {j} has no remaining data; the request erases too much")

    quarantine = frozenset(quarantine)
    batch_counts = [0] * e.k
    lock = threading.Lock()

    def job(j):
        def audit(batch_ids):
            leaked = quarantine.intersection(int(i) for i in batch_ids)
            if leaked:
                raise QuarantineViolation(
                    f"rectification batch of sub-model {j} holds erased ids, e.g. {min(leaked)}")
            with lock:
                batch_counts[j] += 1

        data = remaining[j]
        job_cfg = cfg.with_seed(derive_seed(cfg.seed, request_index, j))
        model, _ = train_with_history(e.sub_models[j], data.features, data.labels, job_cfg,
                                      ids=data.ids, on_batch=audit)
        return model

    results = run_jobs(job, range(e.k), parallel=parallel, max_workers=max_workers)
    rectified = replace(e, sub_models=[model for model, _ in results])
    return rectified, [seconds for _, seconds in results], sum(batch_counts)


def update_references_and_ledger(e: Ensemble, session: UnlearnSession) -> Ensemble:
    """Record the request in the ledger and drop the session's references."""
    updated = with_ledger(e, session.request.sample_ids)
    updated.requests_handled = e.requests_handled + 1
    session.references.clear()
    return updated


def _check_references(session: UnlearnSession, stage: str):
    for i, ref in session.references.items():
        if ref.fingerprint() != session.snapshot_fingerprints[i]:
            raise ReferenceChanged(f"reference {i} changed {stage}")


def handle_request(e: Ensemble, train: Dataset, req: UnlearnRequest, distill_cfg: TrainConfig,
                   rectify_cfg: TrainConfig, parallel: bool = False,
                   max_workers: Optional[int] = None) -> Tuple[Ensemble, UnlearnReport]:
    """
    Run a full unlearning pass and return the unlearned ensemble with its
    report. `e` itself is never modified, so a failure leaves it usable.
    """
    session = init_session(e, req, distill_cfg, rectify_cfg)
    request_index = e.requests_handled
    current: Dict[int, MlpModel] = dict(enumerate(e.sub_models))

    _check_references(session, "before distillation")

    distill_jobs: List[float] = []
    objectives: Dict[Tuple[int, int], Tuple[float, float]] = {}
    targets_per_iteration: Dict[int, List[int]] = {}

    def distill_all():
        for i in session.active_parts:
            X = train.select(session.groups[i]).features
            targets = {j: current[j] for j in range(e.k) if j != i}
            updated, histories, seconds = unlearn_subset(
                targets, session.references[i], X, distill_cfg, ref_part=i,
                request_index=request_index, parallel=parallel, max_workers=max_workers)
            current.update(updated)
            distill_jobs.extend(seconds)
            targets_per_iteration[i] = sorted(targets)
            for j, history in histories.items():
                objectives[(i, j)] = (history.initial, history.final)

    _, distill_wall = timed(distill_all)

    _check_references(session, "during distillation")

    distilled = replace(e, sub_models=[current[j] for j in range(e.k)])
    remaining = remaining_sets(e, train, req)
    quarantine = e.ledger_ids() | req.sample_ids
    (rectified, rectify_jobs, audited), rectify_wall = timed(
        lambda: rectify(distilled, remaining, rectify_cfg, quarantine, request_index=request_index,
                        parallel=parallel, max_workers=max_workers))

    X_u = train.select(req.sample_ids).features
    output_shift = {j: consistency(e.sub_models[j], rectified.sub_models[j], X_u) for j in range(e.k)}

    unlearned = update_references_and_ledger(rectified, session)

    report = UnlearnReport(
        request_size=len(req),
        group_sizes=[len(g) for g in session.groups],
        validity=session.validity,
        iterations=len(targets_per_iteration),
        targets_per_iteration=targets_per_iteration,
        distill_objectives=objectives,
        phase_seconds={
            'distill': {'serial': float(sum(distill_jobs)), 'wall': float(distill_wall)},
            'rectify': {'serial': float(sum(rectify_jobs)), 'wall': float(rectify_wall)},
        },
        parallel=bool(parallel),
        audited_batches=audited,
        ledger_total=len(unlearned.ledger_ids()),
        output_shift=output_shift,
    )
    logger.info(f"Unlearned {len(req)} ids in {report.iterations} iterations "
                f"(wall {report.seconds_wall:.2f}s, serial {report.seconds_serial:.2f}s)")
    return unlearned, report
