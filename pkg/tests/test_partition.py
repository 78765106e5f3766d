import numpy as np
import pytest

from conftest import id_only_dataset
from data.partition import (
    PartitionMap, UnlearnRequest, build_subset, group_by_part, partition, sample_unlearning, shard,
)
from utils.exceptions import ParseError, ValidationError


def test_random_partitions_cover_every_id_once():
    rng = np.random.default_rng(0)
    for case in range(1000):
        k = int(rng.integers(3, 11))
        n = int(rng.integers(k, 200))
        ids = rng.choice(10_000, size=n, replace=False)
        train = id_only_dataset(ids)
        p = partition(train, k, seed=case)

        parts = p.parts()
        assert frozenset().union(*parts) == train.id_set()
        assert sum(len(part) for part in parts) == n
        assert max(p.part_sizes) - min(p.part_sizes) <= 1
        i = case % k
        assert build_subset(train, p, i) == train.id_set() - parts[i]


def test_partition_is_seeded():
    train = id_only_dataset(range(50))
    assert partition(train, 4, 9).to_dict() == partition(train, 4, 9).to_dict()
    assert partition(train, 4, 9).to_dict() != partition(train, 4, 10).to_dict()


@pytest.mark.parametrize("k", [1, 2])
def test_partition_needs_three_parts(k):
    with pytest.raises(ValidationError, match="K >= 3"):
        partition(id_only_dataset(range(30)), k, 0)


def test_partition_needs_enough_samples():
    with pytest.raises(ValidationError):
        partition(id_only_dataset(range(2)), 3, 0)


def test_shard_allows_two_parts():
    p = shard(id_only_dataset(range(11)), 2, 0)
    assert sorted(p.part_sizes) == [5, 6]
    with pytest.raises(ValidationError):
        shard(id_only_dataset(range(11)), 1, 0)


def test_partition_map_dict_form():
    p = partition(id_only_dataset(range(20)), 3, 1)
    restored = PartitionMap.from_dict(p.to_dict())
    assert restored.parts() == p.parts()
    assert restored.part_of(7) == p.part_of(7)


def test_partition_map_rejects_unbalanced_parts():
    with pytest.raises(ValidationError, match="differ"):
        PartitionMap(k=3, assignment={0: 0, 1: 0, 2: 0, 3: 1})


def test_part_lookups_validate():
    p = partition(id_only_dataset(range(9)), 3, 0)
    with pytest.raises(ValidationError):
        p.part(3)
    with pytest.raises(ValidationError):
        p.part_of(99)


def test_group_by_part_keeps_empty_groups():
    p = PartitionMap(k=3, assignment={i: i % 3 for i in range(9)})
    groups = group_by_part(UnlearnRequest(frozenset({0, 3, 4})), p)
    assert groups == [frozenset({0, 3}), frozenset({4}), frozenset()]


def test_request_needs_ids():
    with pytest.raises(ValidationError):
        UnlearnRequest(frozenset())


def test_request_validation():
    train = id_only_dataset(range(10))
    req = UnlearnRequest(frozenset({1, 2}))
    req.validate_against(train)
    with pytest.raises(ValidationError, match="not training samples"):
        UnlearnRequest(frozenset({1, 20})).validate_against(train)
    with pytest.raises(ValidationError, match="already erased"):
        req.validate_against(train, erased={2})


def test_request_file(tmp_path):
    path = tmp_path / "req.txt"
    path.write_text("# erase these\n4\n\n  7  # late addition\n1\n")
    req = UnlearnRequest.from_file(str(path))
    assert req.sample_ids == {1, 4, 7}

    out = req.to_file(str(tmp_path / "out" / "req.txt"))
    assert UnlearnRequest.from_file(out) == req


def test_request_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1\nabc\n")
    with pytest.raises(ParseError) as info:
        UnlearnRequest.from_file(str(bad))
    assert info.value.line == 2

    dup = tmp_path / "dup.txt"
    dup.write_text("1\n1\n")
    with pytest.raises(ValidationError, match="duplicate"):
        UnlearnRequest.from_file(str(dup))

    with pytest.raises(FileNotFoundError):
        UnlearnRequest.from_file(str(tmp_path / "absent.txt"))


def test_sample_unlearning():
    train = id_only_dataset(range(200))
    req = sample_unlearning(train, 0.05, seed=3)
    assert len(req) == 10
    assert req.sample_ids <= train.id_set()
    assert sample_unlearning(train, 0.05, seed=3) == req

    later = sample_unlearning(train, 0.05, seed=3, exclude=req.sample_ids)
    assert not later.sample_ids & req.sample_ids


@pytest.mark.parametrize("ratio", [0.0, 1.0, 0.001])
def test_sample_unlearning_ratio_bounds(ratio):
    with pytest.raises(ValidationError):
        sample_unlearning(id_only_dataset(range(200)), ratio, seed=0)
