"""
Datasets, partitions and unlearning requests.
"""

from .dataset import Dataset, generate_synthetic, load_csv, save_csv, split
from .partition import (
    PartitionMap,
    UnlearnRequest,
    partition,
    shard,
    build_subset,
    sample_unlearning,
    group_by_part,
)

__all__ = [
    'Dataset',
    'generate_synthetic',
    'load_csv',
    'save_csv',
    'split',
    'PartitionMap',
    'UnlearnRequest',
    'partition',
    'shard',
    'build_subset',
    'sample_unlearning',
    'group_by_part',
]
