import numpy as np
import pytest

from config.settings import TrainConfig
from data.partition import UnlearnRequest
from models.mlp import MlpModel
from unlearning.baselines import (
    BaselineKind, random_relabel, relabel_unlearn, retrain_ensemble, retrain_single,
    run_relabel, run_retrain_ensemble, run_retrain_single, sisa_build, sisa_unlearn, train_single,
)
from utils.exceptions import ValidationError


@pytest.fixture
def sisa(toy_data, fast_cfg):
    return sisa_build(toy_data, 3, fast_cfg, hidden_layers=[8])


def test_random_relabel_never_keeps_the_true_label():
    labels = np.arange(1000) % 4
    wrong = random_relabel(labels, 4, seed=0)
    assert np.all(wrong != labels)
    assert set(wrong.tolist()) == {0, 1, 2, 3}
    assert np.array_equal(random_relabel(labels, 4, seed=0), wrong)


def test_random_relabel_needs_two_classes():
    with pytest.raises(ValidationError):
        random_relabel(np.zeros(3, dtype=int), 1, seed=0)


def test_retrain_single_matches_training_on_remaining_data(toy_data, fast_cfg):
    req = UnlearnRequest(frozenset(range(10)))
    model, report = run_retrain_single(toy_data, req, fast_cfg, [8])
    expected = train_single(toy_data.exclude(range(10)), fast_cfg, [8])
    assert model == expected
    assert retrain_single(toy_data.exclude(range(10)), fast_cfg, [8]) == expected
    assert report.method == BaselineKind.RETRAIN_SINGLE.value
    assert report.request_size == 10
    assert report.seconds_serial == report.seconds_wall


def test_retrain_on_empty_data_is_rejected(toy_data, fast_cfg):
    with pytest.raises(ValidationError):
        retrain_single(toy_data.select([]), fast_cfg, [8])


def test_retrain_ensemble_builds_a_fresh_roel(toy_data, fast_cfg):
    req = UnlearnRequest(frozenset(range(0, 30, 3)))
    e, report = run_retrain_ensemble(toy_data, req, 3, fast_cfg, [8])
    assert e.kind == "roel"
    assert e.partition.ids() == toy_data.id_set() - req.sample_ids
    assert report.retrained == [0, 1, 2]
    assert report.seconds_serial > 0
    direct = retrain_ensemble(toy_data.exclude(req.sample_ids), 3, fast_cfg, [8])
    assert direct.fingerprints() == e.fingerprints()


def test_sisa_sub_models_see_only_their_shard(sisa, toy_data):
    assert sisa.kind == "sisa"
    assert frozenset().union(*sisa.partition.parts()) == toy_data.id_set()
    for i in range(3):
        assert sisa.training_ids[i] == sisa.partition.part(i)


def test_sisa_unlearn_retrains_only_touched_shards(sisa, toy_data):
    touched = sorted(sisa.partition.part(1))[:4]
    unlearned, report = sisa_unlearn(sisa, toy_data, UnlearnRequest(frozenset(touched)))
    assert report.retrained == [1]
    assert unlearned.sub_models[0] == sisa.sub_models[0]
    assert unlearned.sub_models[2] == sisa.sub_models[2]
    assert unlearned.sub_models[1] != sisa.sub_models[1]
    assert unlearned.training_ids[1] == sisa.partition.part(1) - set(touched)
    assert unlearned.unlearned_ledger[1] == frozenset(touched)
    assert sisa.ledger_ids() == frozenset()


def test_sisa_unlearn_equals_sisa_on_remaining_shards(sisa, toy_data, fast_cfg):
    touched = sorted(sisa.partition.part(0))[:3] + sorted(sisa.partition.part(2))[:3]
    unlearned, report = sisa_unlearn(sisa, toy_data, UnlearnRequest(frozenset(touched)),
                                     parallel=True, max_workers=2)
    assert report.retrained == [0, 2]
    serial, _ = sisa_unlearn(sisa, toy_data, UnlearnRequest(frozenset(touched)))
    assert serial.fingerprints() == unlearned.fingerprints()


def test_sisa_unlearn_rejects_repeats_and_roel(sisa, toy_data, toy_ensemble):
    req = UnlearnRequest(frozenset(sorted(sisa.partition.part(0))[:2]))
    unlearned, _ = sisa_unlearn(sisa, toy_data, req)
    with pytest.raises(ValidationError, match="already erased"):
        sisa_unlearn(unlearned, toy_data, req)
    with pytest.raises(ValidationError):
        sisa_unlearn(toy_ensemble, toy_data, req)


def test_relabel_single_model(toy_data, fast_cfg):
    target = train_single(toy_data, fast_cfg, [8])
    cfg = TrainConfig(learning_rate=0.1, epochs=3, batch_size=8, seed=3)
    req = UnlearnRequest(frozenset(range(12)))
    unlearned, report = run_relabel(target, toy_data, req, cfg)
    assert isinstance(unlearned, MlpModel)
    assert unlearned != target
    assert report.method == "relabel"
    assert report.retrained == []


def test_relabel_ensemble_updates_ledger(toy_ensemble, toy_data):
    cfg = TrainConfig(learning_rate=0.1, epochs=2, batch_size=8, seed=3)
    ids = sorted(toy_ensemble.partition.part(0))[:5]
    unlearned = relabel_unlearn(toy_ensemble, toy_data.select(ids), cfg)
    assert unlearned.ledger_ids() == frozenset(ids)
    assert unlearned.requests_handled == 1
    assert all(a != b for a, b in zip(unlearned.sub_models, toy_ensemble.sub_models))


def test_relabel_needs_samples(toy_ensemble, toy_data):
    with pytest.raises(ValidationError):
        relabel_unlearn(toy_ensemble, toy_data.select([]), TrainConfig())
