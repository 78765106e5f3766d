"""
Membership-inference verification of unlearning.

An attack model learns to tell the target's posteriors on training members
from those on held-out samples; its AUC on the erased samples (members)
against an equally sized held-out set (non-members) is the M-AUC. A
significant M-AUC change between the target and the unlearned model over
several seeds shows that unlearning happened.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.stats import rankdata, ttest_rel

from config.settings import TrainConfig
from data.dataset import Dataset
from models.mlp import MlpModel, init_model, train
from utils.exceptions import ShapeError, ValidationError
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MEMBER, NON_MEMBER = 1, 0
# Largest per-sample cross-entropy fed to the attack
LOSS_CAP = 10.0


@dataclass
class MembershipSplit:
    """Samples of one verification seed."""

    members: Dataset        # D^tr: training samples outside D^u
    non_members: Dataset    # D^t: the test set
    held_out: Dataset       # D^ta: test samples scored against D^u


def sample_splits(train_data: Dataset, test_data: Dataset, unlearn_ids: Iterable[int],
                  seed: int) -> MembershipSplit:
    """
    The attack trains on the whole test set against as many training samples
    outside D^u; |D^u| test samples are drawn to score it.
    """
    unlearn_ids = frozenset(int(i) for i in unlearn_ids)
    n_u = len(unlearn_ids)
    if n_u == 0:
        raise ValidationError("verification needs at least one unlearned sample")
    if len(test_data) < n_u:
        raise ValidationError(f"test set of {len(test_data)} cannot hold out {n_u} samples")

    rng = np.random.default_rng(seed)
    held_out = test_data.select(rng.choice(test_data.ids, size=n_u, replace=False))

    pool = np.array([i for i in train_data.ids if int(i) not in unlearn_ids], dtype=np.int64)
    if pool.size < len(test_data):
        raise ValidationError(f"only {pool.size} remaining training samples for {len(test_data)} members")
    members = train_data.select(rng.choice(pool, size=len(test_data), replace=False))
    return MembershipSplit(members=members, non_members=test_data, held_out=held_out)


def attack_features(model, data: Dataset) -> np.ndarray:
    """
    Posteriors of `model` sorted in descending order, followed by the
    true-class posterior and its cross-entropy (capped at LOSS_CAP).
    """
    probs = np.asarray(model.predict_proba(data.features), dtype=np.float64)
    true_prob = probs[np.arange(len(data)), data.labels]
    loss = np.minimum(-np.log(np.maximum(true_prob, np.exp(-LOSS_CAP))), LOSS_CAP)
    return np.column_stack([-np.sort(-probs, axis=1), true_prob, loss])


def build_mi_dataset(target, members: Dataset, non_members: Dataset,
                     unlearn_ids: Iterable[int] = ()) -> Tuple[np.ndarray, np.ndarray]:
    """Attack features of the target, 1 for members and 0 for non-members."""
    if len(members) != len(non_members):
        raise ValidationError(f"{len(members)} members but {len(non_members)} non-members")
    if len(members) == 0:
        raise ValidationError("attack training set is empty")
    overlap = members.id_set() & frozenset(int(i) for i in unlearn_ids)
    if overlap:
        raise ValidationError(f"{len(overlap)} attack members are unlearning samples")

    features = np.vstack([attack_features(target, members), attack_features(target, non_members)])
    labels = np.concatenate([np.full(len(members), MEMBER), np.full(len(non_members), NON_MEMBER)])
    return features, labels.astype(np.int64)


def train_attack(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig, hidden: int = 64) -> MlpModel:
    """Two-layer fully connected member/non-member classifier."""
    features = np.asarray(features, dtype=np.float64)
    model = init_model([features.shape[1], int(hidden), 2], derive_seed(cfg.seed, 1))
    return train(model, features, labels, cfg)


def auc_score(member_scores, non_member_scores) -> float:
    """Rank-statistic AUC; tied pairs count one half."""
    pos = np.asarray(member_scores, dtype=np.float64).ravel()
    neg = np.asarray(non_member_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("AUC needs at least one score per class")
    ranks = rankdata(np.concatenate([pos, neg]))
    rank_sum = ranks[:pos.size].sum()
    return float((rank_sum - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))


def member_scores(attack: MlpModel, model, data: Dataset) -> np.ndarray:
    return attack.predict_proba(attack_features(model, data))[:, MEMBER]


def m_auc(attack: MlpModel, model, unlearn: Dataset, held_out: Dataset) -> float:
    """AUC of the attack separating D^u (members) from D^ta (non-members) on `model`'s outputs."""
    if len(unlearn) == 0 or len(held_out) == 0:
        raise ValidationError("M-AUC needs non-empty member and non-member sets")
    if len(unlearn) != len(held_out):
        raise ShapeError(f"{len(unlearn)} unlearned samples but {len(held_out)} held-out samples")
    return auc_score(member_scores(attack, model, unlearn), member_scores(attack, model, held_out))


@dataclass
class VerifiabilityResult:
    before: List[float] = field(default_factory=list)
    after: List[float] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    p_value: float = 1.0

    @property
    def mean_before(self) -> float:
        return float(np.mean(self.before))

    @property
    def mean_after(self) -> float:
        return float(np.mean(self.after))

    @property
    def delta(self) -> float:
        return abs(self.mean_before - self.mean_after)


def paired_p_value(before: List[float], after: List[float]) -> float:
    """Two-sided paired t-test; identical pairs give 1.0."""
    diffs = np.asarray(before) - np.asarray(after)
    if np.all(diffs == 0):
        return 1.0
    p = float(ttest_rel(before, after).pvalue)
    return 1.0 if np.isnan(p) else p


def verifiability(target, unlearned, train_data: Dataset, test_data: Dataset, unlearn: Dataset,
                  n_seeds: int, attack_cfg: TrainConfig, attack_hidden: int = 64,
                  base_seed: int = 0, seeds: Optional[List[int]] = None) -> VerifiabilityResult:
    """
    Per seed: resample the splits, train one attack on the target's outputs
    and score the target and the unlearned model with it.
    """
    if n_seeds < 2:
        raise ValidationError("verifiability needs at least two seeds for a variance estimate")
    seeds = list(seeds) if seeds is not None else [derive_seed(base_seed, s) for s in range(n_seeds)]
    if len(seeds) != n_seeds:
        raise ValidationError(f"{len(seeds)} seeds given for n_seeds={n_seeds}")

    result = VerifiabilityResult(seeds=seeds)
    for seed in seeds:
        split = sample_splits(train_data, test_data, unlearn.ids, seed)
        cfg = attack_cfg.with_seed(derive_seed(attack_cfg.seed, seed))
        X, y = build_mi_dataset(target, split.members, split.non_members, unlearn.ids)
        attack = train_attack(X, y, cfg, attack_hidden)
        result.before.append(m_auc(attack, target, unlearn, split.held_out))
        result.after.append(m_auc(attack, unlearned, unlearn, split.held_out))

    result.p_value = paired_p_value(result.before, result.after)
    logger.info(f"M-AUC before {result.mean_before:.4f}, after {result.mean_after:.4f}, "
                f"|delta| {result.delta:.4f}, p={result.p_value:.4g}")
    return result
