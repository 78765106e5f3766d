"""
Predictor directories: `manifest.json` plus one checkpoint per model.

Single models and ensembles share the layout, so every method's output
can be loaded by `load_predictor`.
"""

import os
import json
import logging
from dataclasses import asdict
from typing import Iterable, Optional, Union

from config.settings import TrainConfig
from data.partition import PartitionMap
from models.checkpoint import save_checkpoint, load_checkpoint
from models.mlp import MlpModel
from unlearning.roel import Ensemble
from utils.exceptions import FormatError, VersionMismatchError
from utils.registry import write_json_atomic

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "etid-predictor"
MANIFEST_VERSION = 1
MANIFEST_FILE = "manifest.json"

Predictor = Union[MlpModel, Ensemble]


def _checkpoint_name(i: int) -> str:
    return f"model_{i}.ckpt"


def save_ensemble(e: Ensemble, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, model in enumerate(e.sub_models):
        names.append(_checkpoint_name(i))
        save_checkpoint(model, os.path.join(directory, names[-1]))

    manifest = {
        'format': MANIFEST_FORMAT,
        'version': MANIFEST_VERSION,
        'kind': e.kind,
        'k': e.k,
        'layer_sizes': e.layer_sizes,
        'checkpoints': names,
        'fingerprints': e.fingerprints(),
        'partition': e.partition.to_dict(),
        'ledger': [sorted(p) for p in e.unlearned_ledger],
        'training_ids': [sorted(ids) for ids in e.training_ids],
        'requests_handled': e.requests_handled,
        'train_config': asdict(e.train_config),
    }
    write_json_atomic(os.path.join(directory, MANIFEST_FILE), manifest)
    logger.debug(f"Saved {e.kind} ensemble (K={e.k}) to {directory}")
    return directory


def save_single(model: MlpModel, directory: str, training_ids: Optional[Iterable[int]] = None,
                train_config: Optional[TrainConfig] = None) -> str:
    os.makedirs(directory, exist_ok=True)
    name = _checkpoint_name(0)
    save_checkpoint(model, os.path.join(directory, name))
    manifest = {
        'format': MANIFEST_FORMAT,
        'version': MANIFEST_VERSION,
        'kind': 'single',
        'layer_sizes': list(model.layer_sizes),
        'checkpoints': [name],
        'fingerprints': [model.fingerprint()],
        'training_ids': [sorted(int(i) for i in training_ids)] if training_ids is not None else [],
        'train_config': asdict(train_config) if train_config is not None else None,
    }
    write_json_atomic(os.path.join(directory, MANIFEST_FILE), manifest)
    return directory


def save_predictor(predictor: Predictor, directory: str, **kwargs) -> str:
    if isinstance(predictor, Ensemble):
        return save_ensemble(predictor, directory)
    return save_single(predictor, directory, **kwargs)


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(manifest, dict) or manifest.get('format') != MANIFEST_FORMAT:
        raise FormatError(f"{path}: not a predictor manifest")
    if manifest.get('version') != MANIFEST_VERSION:
        raise VersionMismatchError(
            f"{path}: manifest version {manifest.get('version')} is not supported (expected {MANIFEST_VERSION})")
    return manifest


def _load_models(directory: str, manifest: dict):
    models = []
    fingerprints = manifest.get('fingerprints', [])
    for idx, name in enumerate(manifest['checkpoints']):
        model = load_checkpoint(os.path.join(directory, name))
        if list(model.layer_sizes) != list(manifest['layer_sizes']):
            raise FormatError(f"{name}: layer sizes {model.layer_sizes} disagree with manifest")
        if idx < len(fingerprints) and model.fingerprint() != fingerprints[idx]:
            raise FormatError(f"{name}: parameters do not match the manifest fingerprint")
        models.append(model)
    return models


def load_predictor(directory: str) -> Predictor:
    manifest = read_manifest(directory)
    try:
        models = _load_models(directory, manifest)
        if manifest['kind'] == 'single':
            return models[0]
        return Ensemble(
            kind=manifest['kind'],
            sub_models=models,
            partition=PartitionMap.from_dict(manifest['partition']),
            train_config=TrainConfig(**manifest['train_config']),
            unlearned_ledger=[frozenset(p) for p in manifest['ledger']],
            training_ids=[frozenset(ids) for ids in manifest.get('training_ids', [])],
            requests_handled=int(manifest.get('requests_handled', 0)),
        )
    except KeyError as e:
        raise FormatError(f"{directory}: manifest is missing field {e}") from None


def load_ensemble(directory: str) -> Ensemble:
    predictor = load_predictor(directory)
    if not isinstance(predictor, Ensemble):
        raise FormatError(f"{directory} holds a single model, expected an ensemble")
    return predictor


def training_ids_of(directory: str) -> list:
    """Training-id audit recorded in a predictor manifest."""
    return [frozenset(ids) for ids in read_manifest(directory).get('training_ids', [])]
