"""
K-way partitioning, leave-one-part-out subsets and unlearning requests.
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from data.dataset import Dataset
from utils.exceptions import ParseError, ValidationError

logger = logging.getLogger(__name__)

MIN_ROEL_PARTS = 3


@dataclass(frozen=True, eq=False)
class PartitionMap:
    """Assignment of every training id to exactly one of `k` parts."""

    k: int
    assignment: Dict[int, int]
    part_sizes: List[int] = field(default_factory=list)

    def __post_init__(self):
        assignment = {int(i): int(p) for i, p in self.assignment.items()}
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        bad = [p for p in set(assignment.values()) if not 0 <= p < self.k]
        if bad:
            raise ValidationError(f"part indices {sorted(bad)} out of range [0, {self.k})")
        sizes = [0] * self.k
        for p in assignment.values():
            sizes[p] += 1
        if self.part_sizes and list(self.part_sizes) != sizes:
            raise ValidationError(f"declared part sizes {list(self.part_sizes)} do not match assignment {sizes}")
        if sizes and max(sizes) - min(sizes) > 1:
            raise ValidationError(f"part sizes must differ by at most 1, got {sizes}")
        object.__setattr__(self, 'assignment', assignment)
        object.__setattr__(self, 'part_sizes', sizes)
        object.__setattr__(self, '_parts', None)

    def parts(self) -> List[frozenset]:
        if self._parts is None:
            buckets: List[set] = [set() for _ in range(self.k)]
            for sample_id, p in self.assignment.items():
                buckets[p].add(sample_id)
            object.__setattr__(self, '_parts', [frozenset(b) for b in buckets])
        return self._parts

    def part(self, i: int) -> frozenset:
        _check_part_index(i, self.k)
        return self.parts()[i]

    def part_of(self, sample_id: int) -> int:
        try:
            return self.assignment[int(sample_id)]
        except KeyError:
            raise ValidationError(f"sample id {sample_id} is not in the partition") from None

    def ids(self) -> frozenset:
        return frozenset(self.assignment)

    def to_dict(self) -> Dict:
        return {'k': self.k, 'parts': [sorted(p) for p in self.parts()]}

    @classmethod
    def from_dict(cls, data: Dict) -> 'PartitionMap':
        assignment = {int(i): p for p, members in enumerate(data['parts']) for i in members}
        return cls(k=int(data['k']), assignment=assignment)


def _check_part_index(i: int, k: int):
    if not 0 <= int(i) < k:
        raise ValidationError(f"part index {i} out of range [0, {k})")


def _assign(ids: Sequence[int], k: int, seed: int) -> PartitionMap:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size < k:
        raise ValidationError(f"cannot split {ids.size} samples into {k} parts")
    order = np.random.default_rng(seed).permutation(ids.size)
    assignment = {int(ids[pos]): rank % k for rank, pos in enumerate(order)}
    return PartitionMap(k=k, assignment=assignment)


def partition(train: Dataset, k: int, seed: int) -> PartitionMap:
    """Seeded random split of the training ids into `k` near-equal parts."""
    if k < MIN_ROEL_PARTS:
        raise ValidationError(
            f"K={k}: leave-one-part-out ensembles need K >= {MIN_ROEL_PARTS} so that every "
            "sub-model is a retrained-alike reference for the others")
    return _assign(train.ids, k, seed)


def shard(train: Dataset, k: int, seed: int) -> PartitionMap:
    """Disjoint shards for shard-per-model ensembles (K >= 2)."""
    if k < 2:
        raise ValidationError(f"sharded ensembles need K >= 2, got {k}")
    return _assign(train.ids, k, seed)


def build_subset(train: Dataset, p: PartitionMap, i: int) -> frozenset:
    """Ids of D_{-i}: every training id outside part i."""
    _check_part_index(i, p.k)
    return frozenset(int(s) for s in train.ids) - p.part(i)


@dataclass(frozen=True)
class UnlearnRequest:
    """Sample ids requested for erasure."""

    sample_ids: frozenset

    def __post_init__(self):
        ids = frozenset(int(i) for i in self.sample_ids)
        if not ids:
            raise ValidationError("an unlearning request needs at least one sample id")
        object.__setattr__(self, 'sample_ids', ids)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def validate_against(self, train: Dataset, erased: Iterable[int] = ()):
        """Every id must be a training id that has not been erased yet."""
        unknown = self.sample_ids - train.id_set()
        if unknown:
            raise ValidationError(f"{len(unknown)} requested ids are not training samples, e.g. {min(unknown)}")
        repeated = self.sample_ids & frozenset(erased)
        if repeated:
            raise ValidationError(f"{len(repeated)} requested ids were already erased, e.g. {min(repeated)}")

    def to_file(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w') as f:
            f.write("\n".join(str(i) for i in sorted(self.sample_ids)) + "\n")
        return path

    @classmethod
    def from_file(cls, path: str) -> 'UnlearnRequest':
        """Newline-separated ids; blank lines and `#` comments are ignored."""
        if not os.path.exists(path):
            raise FileNotFoundError(f"Request file not found: {path}")
        ids = []
        with open(path, 'r') as f:
            for line_no, line in enumerate(f, start=1):
                text = line.split('#', 1)[0].strip()
                if not text:
                    continue
                try:
                    ids.append(int(text))
                except ValueError:
                    raise ParseError(f"invalid sample id '{text}'", line=line_no) from None
        if len(set(ids)) != len(ids):
            raise ValidationError(f"request file {path} lists duplicate ids")
        return cls(frozenset(ids))


def sample_unlearning(train: Dataset, ratio: float, seed: int,
                      exclude: Optional[Iterable[int]] = None) -> UnlearnRequest:
    """Uniform sample of round(ratio * N) ids without replacement."""
    if not 0 < ratio < 1:
        raise ValidationError(f"unlearning ratio must lie in (0, 1), got {ratio}")
    count = int(round(ratio * len(train)))
    if count == 0:
        raise ValidationError(f"ratio {ratio} selects no samples from N={len(train)}")
    pool = train.ids
    if exclude is not None:
        excluded = frozenset(int(i) for i in exclude)
        pool = np.array([i for i in pool if int(i) not in excluded], dtype=np.int64)
    if count > pool.size:
        raise ValidationError(f"cannot sample {count} ids from {pool.size} candidates")
    chosen = np.random.default_rng(seed).choice(pool, size=count, replace=False)
    return UnlearnRequest(frozenset(int(i) for i in chosen))


def group_by_part(req: UnlearnRequest, p: PartitionMap) -> List[frozenset]:
    """Split a request into d_i^u = D^u ∩ d_i for every part (empty groups kept)."""
    groups: List[set] = [set() for _ in range(p.k)]
    for sample_id in req.sample_ids:
        groups[p.part_of(sample_id)].add(sample_id)
    return [frozenset(g) for g in groups]
