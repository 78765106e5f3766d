"""
Run registry: `runs.json` at the output root maps `<method>/<seed>` to the
artifacts a run persisted.
"""

import os
import json
import glob
import time
import shutil
import logging
import tempfile
from datetime import datetime
from typing import Any, Dict, List, Optional

from models.checkpoint import load_checkpoint
from utils.exceptions import FormatError

logger = logging.getLogger(__name__)

REGISTRY_FILE = 'runs.json'


def write_json_atomic(path: str, data: Any) -> str:
    """Write JSON through a temp file in the target directory, then replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temp_file = tempfile.NamedTemporaryFile(mode='w', delete=False, dir=directory, encoding='utf-8')
    try:
        json.dump(data, temp_file, indent=2, sort_keys=True)
        temp_file.write("\n")
        temp_file.flush()
        os.fsync(temp_file.fileno())
        temp_file.close()
        os.replace(temp_file.name, path)
    except Exception:
        temp_file.close()
        if os.path.exists(temp_file.name):
            os.unlink(temp_file.name)
        raise
    return path


def registry_path(output_dir: str) -> str:
    return os.path.join(output_dir, REGISTRY_FILE)


def load_run_registry(output_dir: str) -> Dict[str, Dict]:
    """
    Load the registry. A missing file yields an empty registry; a corrupted
    one is backed up and replaced by an empty registry.
    """
    path = registry_path(output_dir)
    if not os.path.exists(path):
        return {}

    try:
        with open(path, 'r', encoding='utf-8') as f:
            registry = json.load(f)
        if not isinstance(registry, dict):
            raise json.JSONDecodeError("top level is not an object", "", 0)
        logger.debug(f"Loaded run registry with {len(registry)} entries")
        return registry
    except json.JSONDecodeError as e:
        backup_file = f"{path}.bak.{int(time.time())}"
        shutil.copy2(path, backup_file)
        logger.warning(f"Run registry {path} is corrupted ({e}); backed up to {backup_file}")
        return {}


def save_run_registry(output_dir: str, registry: Dict[str, Dict]) -> str:
    path = write_json_atomic(registry_path(output_dir), registry)
    logger.debug(f"Saved run registry with {len(registry)} entries")
    return path


def run_key(method: str, seed: int) -> str:
    return f"{method}/{seed}"


def register_run(output_dir: str, method: str, seed: int, artifacts: Dict[str, str],
                 details: Optional[Dict[str, Any]] = None) -> Dict[str, Dict]:
    """
    Record (or extend) the artifacts of one run. `artifacts` maps an artifact
    name to a path relative to `output_dir`.
    """
    registry = load_run_registry(output_dir)
    key = run_key(method, seed)
    entry = dict(registry.get(key, {}))
    entry.setdefault('method', method)
    entry.setdefault('seed', int(seed))
    merged = dict(entry.get('artifacts', {}))
    merged.update({name: _relative(output_dir, path) for name, path in artifacts.items()})
    entry['artifacts'] = merged
    if details:
        entry.setdefault('details', {}).update(details)
    entry['updated'] = datetime.now().isoformat()
    registry[key] = entry
    save_run_registry(output_dir, registry)
    return registry


def _relative(output_dir: str, path: str) -> str:
    if os.path.isabs(path):
        return os.path.relpath(path, output_dir)
    return path


def _check_predictor_dir(directory: str) -> List[str]:
    """Problems with a predictor directory: missing manifest or unreadable checkpoints."""
    manifest_file = os.path.join(directory, 'manifest.json')
    if not os.path.exists(manifest_file):
        return [f"missing manifest {manifest_file}"]
    try:
        with open(manifest_file, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        return [f"unreadable manifest {manifest_file}: {e}"]

    problems = []
    fingerprints = manifest.get('fingerprints', [])
    for idx, name in enumerate(manifest.get('checkpoints', [])):
        path = os.path.join(directory, name)
        try:
            model = load_checkpoint(path)
        except (FileNotFoundError, FormatError) as e:
            problems.append(str(e))
            continue
        if idx < len(fingerprints) and model.fingerprint() != fingerprints[idx]:
            problems.append(f"{path}: fingerprint does not match manifest")
    return problems


def validate_run_registry(output_dir: str) -> Dict[str, List[str]]:
    """
    Check every registered artifact. Returns problems per run key; an empty
    dict means the registry is consistent with the output tree.
    """
    registry = load_run_registry(output_dir)
    invalid: Dict[str, List[str]] = {}

    for key, entry in registry.items():
        problems = []
        for name, rel_path in entry.get('artifacts', {}).items():
            path = os.path.join(output_dir, rel_path)
            if not os.path.exists(path):
                problems.append(f"{name}: {path} does not exist")
            elif os.path.isdir(path):
                problems.extend(f"{name}: {p}" for p in _check_predictor_dir(path))
        if problems:
            invalid[key] = problems
            for problem in problems:
                logger.warning(f"Registry entry {key}: {problem}")

    logger.info(f"Validated {len(registry)} registry entries, {len(invalid)} with problems")
    return invalid


_ARTIFACT_FILES = {
    'unlearned': 'unlearned',
    'report': 'unlearn_report.json',
    'metrics': 'metrics.json',
}


def rebuild_run_registry(output_dir: str) -> Dict[str, Dict]:
    """Recreate the registry by scanning `<out>/<method>/<seed>/` and `<out>/targets/`."""
    registry: Dict[str, Dict] = {}
    now = datetime.now().isoformat()

    for run_dir in sorted(glob.glob(os.path.join(output_dir, '*', '*'))):
        method, seed = os.path.basename(os.path.dirname(run_dir)), os.path.basename(run_dir)
        if method in ('data', 'requests', 'targets', 'logs') or not seed.isdigit():
            continue
        artifacts = {name: os.path.join(method, seed, rel)
                     for name, rel in _ARTIFACT_FILES.items()
                     if os.path.exists(os.path.join(run_dir, rel))}
        if artifacts:
            registry[run_key(method, int(seed))] = {
                'method': method, 'seed': int(seed), 'artifacts': artifacts, 'updated': now}

    for target_dir in sorted(glob.glob(os.path.join(output_dir, 'targets', '*', '*'))):
        target, seed = os.path.basename(os.path.dirname(target_dir)), os.path.basename(target_dir)
        if not seed.isdigit() or not os.path.exists(os.path.join(target_dir, 'manifest.json')):
            continue
        registry[run_key(f"target_{target}", int(seed))] = {
            'method': f"target_{target}", 'seed': int(seed),
            'artifacts': {'model': os.path.join('targets', target, seed)}, 'updated': now}

    save_run_registry(output_dir, registry)
    logger.info(f"Rebuilt run registry with {len(registry)} entries")
    return registry
