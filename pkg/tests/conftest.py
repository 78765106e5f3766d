import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.settings import TrainConfig
from data.dataset import Dataset, generate_synthetic
from unlearning.roel import build


@pytest.fixture
def fast_cfg():
    return TrainConfig(learning_rate=0.1, epochs=5, batch_size=32, seed=0)


@pytest.fixture
def distill_cfg():
    return TrainConfig(learning_rate=0.1, epochs=10, batch_size=16, seed=1,
                       loss="kl_to_targets", stop_loss=1e-6, keep_best=True)


@pytest.fixture
def rectify_cfg():
    return TrainConfig(learning_rate=0.05, epochs=1, batch_size=32, seed=2)


@pytest.fixture
def toy_data():
    """300 samples, 4 features, 3 well separated classes."""
    return generate_synthetic(300, 4, 3, cluster_spread=0.5, seed=1)


@pytest.fixture
def toy_ensemble(toy_data, fast_cfg):
    return build(toy_data, 3, fast_cfg, hidden_layers=[8])


def id_only_dataset(ids, num_classes=1):
    ids = np.asarray(ids, dtype=np.int64)
    return Dataset(np.zeros((ids.size, 1)), np.zeros(ids.size, dtype=np.int64), ids, num_classes)


class FixedPosteriors:
    """Stand-in predictor returning preset rows."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=np.float64)

    def predict_proba(self, X):
        return self.rows[:len(X)]
