#!/usr/bin/env python3
"""
Main entry point for the ETID unlearning experiment pipeline.
"""

import argparse
import sys
import os
import json
import hashlib
import logging
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import yaml

# Add the current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config.settings import (
    ExperimentConfig, load_config, create_default_config_file, METHODS
)
from data.dataset import Dataset, generate_synthetic, load_csv, save_csv, split
from data.partition import UnlearnRequest, sample_unlearning
from evaluation.metrics import (
    SPLITS, MetricsReport, accuracy, split_metrics, summarize, time_phase, write_csv
)
from evaluation.membership import verifiability
from unlearning.baselines import (
    train_single, sisa_build, sisa_unlearn, run_retrain_single, run_retrain_ensemble, run_relabel
)
from unlearning.roel import Ensemble, build
from unlearning.storage import save_predictor, load_predictor, load_ensemble, training_ids_of
from unlearning.tid import handle_request
from utils.exceptions import ConfigError, ValidationError, ValidityExpired, FormatError
from utils.logging import setup_logging, run_logger, close_run_logger, log_run_event
from utils.registry import (
    register_run, validate_run_registry, rebuild_run_registry, write_json_atomic
)
from utils.seeding import derive_seed

logger = logging.getLogger("etid")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_VALIDITY = 0, 1, 2, 3

# Target model each method starts from, and the retrained model it is compared with
TARGET_OF = {
    'etid': 'etid',
    'retrain_ensemble': 'etid',
    'sisa': 'sisa',
    'retrain_single': 'single',
    'relabel': 'single',
}
ORACLE_OF = {
    'etid': 'retrain_ensemble',
    'retrain_ensemble': 'retrain_ensemble',
    'sisa': 'retrain_sisa',
    'retrain_single': 'retrain_single',
    'relabel': 'retrain_single',
}
TARGETS = ('single', 'sisa', 'etid')
RETRAIN_METHODS = ('retrain_single', 'retrain_ensemble')


# ---------------------------------------------------------------------------
# Paths

def data_path(config: ExperimentConfig) -> str:
    return os.path.join(config.output_dir, 'data', 'dataset.csv')


def split_path(config: ExperimentConfig, seed: int) -> str:
    return os.path.join(config.output_dir, 'data', f'seed_{seed}', 'split.json')


def request_path(config: ExperimentConfig, seed: int) -> str:
    return os.path.join(config.output_dir, 'requests', f'seed_{seed}.txt')


def target_dir(config: ExperimentConfig, target: str, seed: int) -> str:
    return os.path.join(config.output_dir, 'targets', target, str(seed))


def run_dir(config: ExperimentConfig, method: str, seed: int) -> str:
    return os.path.join(config.output_dir, method, str(seed))


def oracle_dir(config: ExperimentConfig, oracle: str, seed: int) -> str:
    """Retrained counterparts; the retrain methods' own outputs double as oracles."""
    if oracle in RETRAIN_METHODS:
        return os.path.join(run_dir(config, oracle, seed), 'unlearned')
    return os.path.join(config.output_dir, 'oracles', oracle, str(seed))


# ---------------------------------------------------------------------------
# Data preparation

def load_or_generate_data(config: ExperimentConfig) -> Dataset:
    path = data_path(config)
    if os.path.exists(path):
        return load_csv(path, num_classes=None if config.dataset.source == 'csv' else config.dataset.n_classes)

    ds = config.dataset
    if ds.source == 'csv':
        dataset = load_csv(ds.csv_path)
    else:
        dataset = generate_synthetic(ds.n_samples, ds.n_features, ds.n_classes,
                                     cluster_spread=ds.cluster_spread, seed=ds.seed)
        logger.info(f"Generated {len(dataset)} synthetic samples ({ds.n_features} features, "
                    f"{ds.n_classes} classes)")
    save_csv(dataset, path)
    return dataset


def load_or_create_split(config: ExperimentConfig, dataset: Dataset, seed: int) -> Tuple[Dataset, Dataset]:
    path = split_path(config, seed)
    if os.path.exists(path):
        try:
            with open(path, 'r') as f:
                ids = json.load(f)
            return dataset.select(ids['train_ids']), dataset.select(ids['test_ids'])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ValidationError(f"unreadable split file {path}: {e}; delete it to resample") from e

    train_data, test_data = split(dataset, config.dataset.train_ratio, derive_seed(config.dataset.seed, seed))
    write_json_atomic(path, {'seed': seed,
                             'train_ids': [int(i) for i in train_data.ids],
                             'test_ids': [int(i) for i in test_data.ids]})
    return train_data, test_data


def load_or_create_request(config: ExperimentConfig, train_data: Dataset, seed: int,
                           request_file: Optional[str] = None) -> UnlearnRequest:
    if request_file:
        req = UnlearnRequest.from_file(request_file)
        req.validate_against(train_data)
        req.to_file(request_path(config, seed))
    else:
        path = request_path(config, seed)
        if os.path.exists(path):
            req = UnlearnRequest.from_file(path)
        else:
            req = sample_unlearning(train_data, config.unlearn_ratio, derive_seed(seed, 7))
            req.to_file(path)
    req.validate_against(train_data)
    return req


def prepare_seed(config: ExperimentConfig, seed: int, request_file: Optional[str] = None):
    dataset = load_or_generate_data(config)
    train_data, test_data = load_or_create_split(config, dataset, seed)
    req = load_or_create_request(config, train_data, seed, request_file)
    return train_data, test_data, req


def seed_train_config(config: ExperimentConfig, seed: int):
    return config.train.with_seed(derive_seed(config.train.seed, seed))


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_data(config: ExperimentConfig, request_file: Optional[str] = None):
    """Persist the dataset and, per seed, the split and the unlearning request."""
    for seed in config.seeds:
        train_data, test_data, req = prepare_seed(config, seed, request_file)
        logger.info(f"Seed {seed}: {len(train_data)} train / {len(test_data)} test, "
                    f"{len(req)} ids to unlearn")


def train_target(config: ExperimentConfig, target: str, train_data: Dataset, seed: int):
    cfg = seed_train_config(config, seed)
    if target == 'single':
        return train_single(train_data, cfg, config.hidden_layers)
    if target == 'sisa':
        return sisa_build(train_data, config.k, cfg, config.hidden_layers,
                          parallel=config.parallel, max_workers=config.jobs)
    return build(train_data, config.k, cfg, config.hidden_layers,
                 parallel=config.parallel, max_workers=config.jobs)


def cmd_train(config: ExperimentConfig):
    """Train the single, SISA and ETID target models for every seed."""
    rows = []
    for seed in config.seeds:
        train_data, test_data, req = prepare_seed(config, seed)
        remaining = train_data.exclude(req.sample_ids)
        unlearn = train_data.select(req.sample_ids)
        for target in TARGETS:
            directory = target_dir(config, target, seed)
            if os.path.exists(os.path.join(directory, 'manifest.json')):
                model = load_predictor(directory)
                logger.info(f"Reusing target '{target}' for seed {seed}")
            else:
                model = train_target(config, target, train_data, seed)
                save_predictor(model, directory, **_single_kwargs(model, train_data, config, seed))
                register_run(config.output_dir, f"target_{target}", seed, {'model': directory})
            rows.append({
                'target': target, 'seed': seed, 'k': config.k,
                'acc_remaining': accuracy(model, remaining.features, remaining.labels),
                'acc_test': accuracy(model, test_data.features, test_data.labels),
                'acc_unlearn': accuracy(model, unlearn.features, unlearn.labels),
            })
    write_csv(rows, os.path.join(config.output_dir, 'targets', 'accuracy.csv'))
    log_run_event(config.output_dir, 'train', {'seeds': config.seeds, 'k': config.k})


def _single_kwargs(model, train_data: Dataset, config: ExperimentConfig, seed: int) -> Dict:
    if isinstance(model, Ensemble):
        return {}
    return {'training_ids': train_data.ids, 'train_config': seed_train_config(config, seed)}


def load_target(config: ExperimentConfig, target: str, seed: int):
    directory = target_dir(config, target, seed)
    if not os.path.exists(os.path.join(directory, 'manifest.json')):
        raise ValidationError(f"target '{target}' for seed {seed} is missing; run the train command first")
    return load_predictor(directory)


def request_digest(req: UnlearnRequest) -> str:
    return hashlib.sha256(",".join(str(i) for i in sorted(req.sample_ids)).encode()).hexdigest()


def _write_report(config: ExperimentConfig, method: str, seed: int, report: Dict,
                  req: UnlearnRequest) -> str:
    path = os.path.join(run_dir(config, method, seed), 'unlearn_report.json')
    payload = {'method': method, 'seed': seed, 'k': config.k, 'unlearn_ratio': config.unlearn_ratio,
               'request_digest': request_digest(req)}
    payload.update(report)
    return write_json_atomic(path, payload)


def unlearn_method(config: ExperimentConfig, method: str, seed: int, train_data: Dataset,
                   req: UnlearnRequest, parallel: Optional[bool] = None):
    """Run one method on one seed; returns (unlearned predictor, report dict)."""
    parallel = config.parallel if parallel is None else parallel
    cfg = seed_train_config(config, seed)

    if method == 'etid':
        target = load_ensemble(target_dir(config, 'etid', seed))
        unlearned, report = handle_request(target, train_data, req, config.distill, config.rectify,
                                           parallel=parallel, max_workers=config.jobs)
        return unlearned, report.to_dict()
    if method == 'sisa':
        target = load_ensemble(target_dir(config, 'sisa', seed))
        unlearned, report = sisa_unlearn(target, train_data, req, parallel=parallel, max_workers=config.jobs)
    elif method == 'retrain_single':
        unlearned, report = run_retrain_single(train_data, req, cfg, config.hidden_layers)
    elif method == 'retrain_ensemble':
        unlearned, report = run_retrain_ensemble(train_data, req, config.k, cfg, config.hidden_layers,
                                                 parallel=parallel, max_workers=config.jobs)
    elif method == 'relabel':
        target = load_target(config, 'single', seed)
        unlearned, report = run_relabel(target, train_data, req, config.relabel)
    else:
        raise ValidationError(f"unknown method '{method}'")
    data = report.to_dict()
    data['parallel'] = bool(parallel)
    return unlearned, data


def persist_run(config: ExperimentConfig, method: str, seed: int, unlearned, report: Dict,
                train_data: Dataset, req: UnlearnRequest) -> str:
    out = os.path.join(run_dir(config, method, seed), 'unlearned')
    extra = {}
    if method == 'retrain_single':
        extra = {'training_ids': train_data.exclude(req.sample_ids).ids,
                 'train_config': seed_train_config(config, seed)}
    save_predictor(unlearned, out, **extra)
    report_file = _write_report(config, method, seed, report, req)
    register_run(config.output_dir, method, seed, {'unlearned': out, 'report': report_file})
    return out


def ensure_oracle(config: ExperimentConfig, oracle: str, seed: int, train_data: Dataset,
                  req: UnlearnRequest):
    """Load the retrained counterpart, training and persisting it when absent."""
    directory = oracle_dir(config, oracle, seed)
    remaining_ids = train_data.exclude(req.sample_ids).id_set()
    if os.path.exists(os.path.join(directory, 'manifest.json')):
        if frozenset().union(*training_ids_of(directory)) == remaining_ids:
            return load_predictor(directory)
        logger.warning(f"Oracle '{oracle}' for seed {seed} was trained for another request; retraining")

    logger.info(f"Training oracle '{oracle}' for seed {seed}")
    if oracle in RETRAIN_METHODS:
        model, report = unlearn_method(config, oracle, seed, train_data, req)
        persist_run(config, oracle, seed, model, report, train_data, req)
        return model

    model = sisa_build(train_data.exclude(req.sample_ids), config.k, seed_train_config(config, seed),
                       config.hidden_layers, parallel=config.parallel, max_workers=config.jobs)
    save_predictor(model, directory)
    register_run(config.output_dir, oracle, seed, {'model': directory})
    return model


def cmd_unlearn(config: ExperimentConfig, request_file: Optional[str] = None, chain: bool = False):
    """Apply every configured method to each seed's request and persist the results."""
    if chain:
        return chain_etid_request(config, request_file)

    for seed in config.seeds:
        train_data, _, req = prepare_seed(config, seed, request_file)

        for method in config.methods:
            method_logger, _ = run_logger(f"{method}_{seed}", os.path.join(config.output_dir, 'logs'))
            try:
                method_logger.info(f"Unlearning {len(req)} ids with {method} (seed {seed})")
                if method in RETRAIN_METHODS:
                    # Retrained models are also the oracles of other methods; reuse them when present
                    ensure_oracle(config, method, seed, train_data, req)
                else:
                    unlearned, report = unlearn_method(config, method, seed, train_data, req)
                    persist_run(config, method, seed, unlearned, report, train_data, req)
                    method_logger.info(f"Finished in {report['seconds_wall']:.3f}s wall")
            finally:
                close_run_logger(method_logger)

            if ORACLE_OF[method] != method:
                ensure_oracle(config, ORACLE_OF[method], seed, train_data, req)

    log_run_event(config.output_dir, 'unlearn', {'seeds': config.seeds, 'methods': config.methods})


def chain_etid_request(config: ExperimentConfig, request_file: Optional[str]):
    """
    Serve a further request with the latest unlearned ETID ensemble. The
    seed's request file becomes the cumulative erased set, so evaluation and
    oracles follow the whole ledger.
    """
    if not request_file:
        raise ValidationError("--chain needs --request with the ids of the next request")
    new_req = UnlearnRequest.from_file(request_file)

    for seed in config.seeds:
        train_data, _, _ = prepare_seed(config, seed)
        latest = os.path.join(run_dir(config, 'etid', seed), 'unlearned')
        if os.path.exists(os.path.join(latest, 'manifest.json')):
            base = load_ensemble(latest)
        else:
            base = load_ensemble(target_dir(config, 'etid', seed))
        logger.info(f"Seed {seed}: request {base.requests_handled + 1}, "
                    f"{len(base.ledger_ids())} ids already erased")

        unlearned, report = handle_request(base, train_data, new_req, config.distill, config.rectify,
                                           parallel=config.parallel, max_workers=config.jobs)
        cumulative = UnlearnRequest(unlearned.ledger_ids())
        cumulative.to_file(request_path(config, seed))
        persist_run(config, 'etid', seed, unlearned, report.to_dict(), train_data, cumulative)
        ensure_oracle(config, ORACLE_OF['etid'], seed, train_data, cumulative)

    log_run_event(config.output_dir, 'unlearn', {'seeds': config.seeds, 'methods': ['etid'], 'chain': True})


def _read_report(config: ExperimentConfig, method: str, seed: int) -> Dict:
    path = os.path.join(run_dir(config, method, seed), 'unlearn_report.json')
    if not os.path.exists(path):
        raise ValidationError(f"no unlearning report for {method} seed {seed}; run the unlearn command first")
    with open(path, 'r') as f:
        return json.load(f)


def evaluate_method(config: ExperimentConfig, method: str, seed: int, train_data: Dataset,
                    test_data: Dataset, req: UnlearnRequest) -> MetricsReport:
    target = load_target(config, TARGET_OF[method], seed)
    unlearned = load_predictor(os.path.join(run_dir(config, method, seed), 'unlearned'))
    oracle = ensure_oracle(config, ORACLE_OF[method], seed, train_data, req)
    report = _read_report(config, method, seed)
    if report.get('request_digest') != request_digest(req):
        raise ValidationError(f"{method} seed {seed} was unlearned for a different request; rerun the unlearn command")

    remaining = train_data.exclude(req.sample_ids)
    unlearn = train_data.select(req.sample_ids)
    values = split_metrics(unlearned, oracle, {
        name: (data.features, data.labels) for name, data in zip(SPLITS, (remaining, test_data, unlearn))
    })
    mia = verifiability(target, unlearned, train_data, test_data, unlearn, config.mia_repeats,
                        config.attack, config.attack_hidden, base_seed=seed)

    return MetricsReport(
        method=method, seed=seed, k=config.k, unlearn_ratio=config.unlearn_ratio,
        seconds_serial=float(report['seconds_serial']),
        seconds_parallel=float(report['seconds_wall']) if report.get('parallel') else None,
        m_auc_before=mia.mean_before, m_auc_after=mia.mean_after, delta=mia.delta,
        p_value=mia.p_value, seeds=mia.seeds, **values)


def cmd_evaluate(config: ExperimentConfig) -> List[MetricsReport]:
    """Measure every (method, seed) run and write results and summary tables."""
    reports = []
    for seed in config.seeds:
        train_data, test_data, req = prepare_seed(config, seed)
        for method in config.methods:
            metrics = evaluate_method(config, method, seed, train_data, test_data, req)
            metrics_file = write_json_atomic(os.path.join(run_dir(config, method, seed), 'metrics.json'),
                                             metrics.to_dict())
            register_run(config.output_dir, method, seed, {'metrics': metrics_file})
            logger.info(f"{method} seed {seed}: acc_test={metrics.acc_test:.4f} "
                        f"con_test={metrics.con_test:.4f} |delta|={metrics.delta:.4f} p={metrics.p_value:.3g}")
            reports.append(metrics)

    rows = [r.to_row() for r in reports]
    write_csv(rows, os.path.join(config.output_dir, 'results.csv'))
    write_csv(summarize(rows), os.path.join(config.output_dir, 'summary.csv'))
    log_run_event(config.output_dir, 'evaluate', {'rows': len(rows)})
    return reports


def cmd_bench(config: ExperimentConfig):
    """Time ETID in both execution modes next to full retraining."""
    rows = []
    for seed in config.seeds:
        train_data, _, req = prepare_seed(config, seed)
        for method in ('etid', 'retrain_ensemble', 'retrain_single'):
            modes = (False, True) if method in ('etid', 'retrain_ensemble') else (False,)
            for parallel in modes:
                reports = []
                # seconds_call also covers loading the target checkpoints
                seconds_call = time_phase(lambda: reports.append(
                    unlearn_method(config, method, seed, train_data, req, parallel=parallel)[1]))
                report = reports[0]
                rows.append({'method': method, 'seed': seed, 'k': config.k,
                             'mode': 'parallel' if parallel else 'serial',
                             'seconds_wall': report['seconds_wall'],
                             'seconds_serial': report['seconds_serial'],
                             'seconds_call': seconds_call})
                logger.info(f"bench {method} seed {seed} {rows[-1]['mode']}: {report['seconds_wall']:.3f}s")
    write_csv(rows, os.path.join(config.output_dir, 'bench.csv'))
    log_run_event(config.output_dir, 'bench', {'rows': len(rows)})
    return rows


def run_pipeline(config: ExperimentConfig, request_file: Optional[str] = None) -> List[MetricsReport]:
    config.create_directories()
    cmd_gen_data(config, request_file)
    cmd_train(config)
    cmd_unlearn(config, request_file)
    return cmd_evaluate(config)


def sweep_dir(config: ExperimentConfig, k: int, ratio: float) -> str:
    return os.path.join(config.output_dir, 'sweep', f"K{k}_UR{ratio:g}")


def cmd_sweep(config: ExperimentConfig) -> List[Dict]:
    """Full pipeline over the K x unlearning-ratio grid, one CSV row per (method, K, UR, seed)."""
    rows = []
    for k in config.sweep.k_values:
        for ratio in config.sweep.unlearn_ratios:
            sub = config.override(k=k, unlearn_ratio=ratio, output_dir=sweep_dir(config, k, ratio))
            logger.info(f"Sweep point K={k}, UR={ratio:g}")
            for report in run_pipeline(sub):
                row = {'method': report.method, 'K': k, 'UR': ratio, 'seed': report.seed}
                row.update({name: value for name, value in report.to_row().items()
                            if name not in ('method', 'seed', 'k', 'unlearn_ratio')})
                rows.append(row)
    write_csv(rows, os.path.join(config.output_dir, 'sweep.csv'))
    log_run_event(config.output_dir, 'sweep', {'rows': len(rows)})
    return rows


COMMANDS = ('gen-data', 'train', 'unlearn', 'evaluate', 'bench', 'sweep', 'run')


# ---------------------------------------------------------------------------
# CLI

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='ETID machine unlearning experiments')

    parser.add_argument('command', nargs='?', choices=COMMANDS, help='Pipeline step to run')

    # Config options
    parser.add_argument('--config', '-c', help='Configuration file path (YAML or JSON)')
    parser.add_argument('--create-config', help='Create default configuration file at specified path')
    parser.add_argument('--use-env', action='store_true', help='Use environment variables for configuration')

    # Direct parameter options (override config file)
    parser.add_argument('--output-dir', help='Output directory')
    parser.add_argument('--k', type=int, help='Number of sub-models')
    parser.add_argument('--unlearn-ratio', type=float, help='Fraction of training data to unlearn')
    parser.add_argument('--seeds', type=int, nargs='+', help='Experiment seeds')
    parser.add_argument('--methods', nargs='+', choices=METHODS, help='Unlearning methods')
    parser.add_argument('--request', help='File of sample ids to unlearn (overrides sampled requests)')
    parser.add_argument('--chain', action='store_true',
                        help='Apply --request to the latest unlearned ETID ensemble (sequential requests)')
    parser.add_argument('--parallel', dest='parallel', action='store_true', default=None,
                        help='Run sub-model jobs concurrently')
    parser.add_argument('--no-parallel', dest='parallel', action='store_false', help='Run jobs serially')
    parser.add_argument('--jobs', type=int, help='Maximum concurrent jobs')
    parser.add_argument('--log-level', help='Logging level')

    # Registry management
    parser.add_argument('--validate-registry', action='store_true', help='Validate run registry')
    parser.add_argument('--rebuild-registry', action='store_true', help='Rebuild run registry from existing files')
    return parser


def resolve_config(args) -> ExperimentConfig:
    """File or environment first, then command-line overrides."""
    if args.config or args.use_env or os.environ.get('ETID_OUTPUT_DIR'):
        config = load_config(args.config, args.use_env)
    elif args.output_dir:
        config = ExperimentConfig(output_dir=args.output_dir)
    else:
        raise ConfigError({"config": "No configuration found. Provide --config, --output-dir or set ETID_OUTPUT_DIR"})

    return config.override(
        output_dir=args.output_dir,
        k=args.k,
        unlearn_ratio=args.unlearn_ratio,
        seeds=args.seeds,
        methods=args.methods,
        parallel=args.parallel,
        jobs=args.jobs,
        log_level=args.log_level.upper() if args.log_level else None,
    )


def error_record(exc: BaseException, code: int) -> Dict:
    record = {'error': type(exc).__name__, 'message': str(exc), 'exit_code': code}
    if isinstance(exc, ConfigError):
        record['fields'] = exc.fields
    if isinstance(exc, ValidityExpired):
        record['failing_pairs'] = {f"{i},{j}": r for (i, j), r in sorted(exc.failing.items())}
    return record


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps(error_record(exc, code)), file=sys.stderr)
    return code


def run_command(config: ExperimentConfig, command: str, request_file: Optional[str] = None,
                chain: bool = False):
    if command == 'gen-data':
        return cmd_gen_data(config, request_file)
    if command == 'train':
        return cmd_train(config)
    if command == 'unlearn':
        return cmd_unlearn(config, request_file, chain=chain)
    if command == 'evaluate':
        return cmd_evaluate(config)
    if command == 'bench':
        return cmd_bench(config)
    if command == 'sweep':
        return cmd_sweep(config)
    return run_pipeline(config, request_file)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Handle special commands first
    if args.create_config:
        create_default_config_file(args.create_config, output_dir=args.output_dir or "runs/etid")
        print(f"Wrote default configuration to {args.create_config}")
        return EXIT_OK

    try:
        config = resolve_config(args)
    except (ConfigError, ValidationError, yaml.YAMLError, json.JSONDecodeError) as e:
        return _fail(e, EXIT_CONFIG)
    except FileNotFoundError as e:
        return _fail(e, EXIT_CONFIG)

    if args.rebuild_registry:
        registry = rebuild_run_registry(config.output_dir)
        print(f"Rebuilt registry with {len(registry)} entries")
        return EXIT_OK

    if args.validate_registry:
        invalid = validate_run_registry(config.output_dir)
        print(json.dumps(invalid, indent=2, sort_keys=True))
        return EXIT_OK if not invalid else EXIT_FAILURE

    if not args.command:
        parser.error("a command is required unless --create-config or a registry option is given")

    config.create_directories()
    setup_logging(config.output_dir, config.log_level)
    logger.info(f"Running '{args.command}' in {config.output_dir} at {datetime.now().isoformat()}")
    log_run_event(config.output_dir, 'start', {'command': args.command, 'config': config.to_dict()})

    try:
        run_command(config, args.command, args.request, chain=args.chain)
    except (ConfigError, ValidationError, yaml.YAMLError, json.JSONDecodeError) as e:
        logger.error(f"Invalid input: {e}")
        return _fail(e, EXIT_CONFIG)
    except ValidityExpired as e:
        logger.error(str(e))
        return _fail(e, EXIT_VALIDITY)
    except KeyboardInterrupt:
        print("\nProcessing interrupted by user", file=sys.stderr)
        return EXIT_FAILURE
    except (FormatError, FileNotFoundError, RuntimeError) as e:
        logger.exception(f"Error during '{args.command}'")
        return _fail(e, EXIT_FAILURE)

    log_run_event(config.output_dir, 'finish', {'command': args.command})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
