"""
Configuration settings for the unlearning pipeline.
"""

import os
import yaml
import json
from dataclasses import dataclass, field, asdict, fields as dataclass_fields
from typing import List, Optional, Dict, Any

from utils.exceptions import ConfigError

CONFIG_VERSION = 1
LOSS_KINDS = ("cross_entropy", "kl_to_targets")
METHODS = ("etid", "retrain_single", "retrain_ensemble", "sisa", "relabel")
DATA_SOURCES = ("synthetic", "csv")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class TrainConfig:
    """Hyperparameters of one training phase"""

    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True
    loss: str = "cross_entropy"
    # L2 shrinkage of the weight matrices per step (biases are not decayed)
    weight_decay: float = 0.0

    # Stop once an epoch's full-data loss drops below this value
    stop_loss: Optional[float] = None
    # Return the parameters with the lowest full-data loss (initial state included)
    keep_best: bool = False

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def validate(self, prefix: str = "") -> Dict[str, str]:
        errors = {}
        if not self.learning_rate > 0:
            errors[f"{prefix}learning_rate"] = "must be > 0"
        if self.epochs < 0:
            errors[f"{prefix}epochs"] = "must be >= 0"
        if self.batch_size < 1:
            errors[f"{prefix}batch_size"] = "must be >= 1"
        if self.weight_decay < 0:
            errors[f"{prefix}weight_decay"] = "must be >= 0"
        if self.loss not in LOSS_KINDS:
            errors[f"{prefix}loss"] = f"must be one of {', '.join(LOSS_KINDS)}"
        if self.stop_loss is not None and self.stop_loss < 0:
            errors[f"{prefix}stop_loss"] = "must be >= 0"
        return errors

    def with_seed(self, seed: int) -> 'TrainConfig':
        data = asdict(self)
        data['seed'] = int(seed)
        return TrainConfig(**data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], prefix: str = "") -> 'TrainConfig':
        try:
            return cls(**_known_fields(cls, data, prefix))
        except ConfigError as e:
            if not prefix:
                raise
            raise ConfigError({k if k.startswith(prefix) else f"{prefix}{k}": v
                               for k, v in e.fields.items()}) from None


@dataclass
class DatasetConfig:
    """Where the data comes from and how it is split"""

    source: str = "synthetic"
    csv_path: Optional[str] = None
    n_samples: int = 5000
    n_features: int = 20
    n_classes: int = 5
    cluster_spread: float = 2.0
    train_ratio: float = 0.8
    seed: int = 2024

    def validate(self, prefix: str = "dataset.") -> Dict[str, str]:
        errors = {}
        if self.source not in DATA_SOURCES:
            errors[f"{prefix}source"] = f"must be one of {', '.join(DATA_SOURCES)}"
        if self.source == "csv":
            if not self.csv_path:
                errors[f"{prefix}csv_path"] = "required when source is csv"
            elif not os.path.exists(self.csv_path):
                errors[f"{prefix}csv_path"] = f"file not found: {self.csv_path}"
        else:
            if self.n_classes < 2:
                errors[f"{prefix}n_classes"] = "must be >= 2"
            if self.n_samples < self.n_classes:
                errors[f"{prefix}n_samples"] = "must be >= n_classes"
            if self.n_features < 1:
                errors[f"{prefix}n_features"] = "must be >= 1"
            if self.cluster_spread < 0:
                errors[f"{prefix}cluster_spread"] = "must be >= 0"
        if not 0 < self.train_ratio < 1:
            errors[f"{prefix}train_ratio"] = "must lie in (0, 1)"
        return errors


@dataclass
class SweepConfig:
    """Sensitivity grid"""

    k_values: List[int] = field(default_factory=lambda: [3, 5, 7, 10])
    unlearn_ratios: List[float] = field(default_factory=lambda: [0.001, 0.005, 0.01, 0.05, 0.1])

    def validate(self, prefix: str = "sweep.") -> Dict[str, str]:
        errors = {}
        if not self.k_values or any(k < 3 for k in self.k_values):
            errors[f"{prefix}k_values"] = "all values must be >= 3"
        if not self.unlearn_ratios or any(not 0 < r < 1 for r in self.unlearn_ratios):
            errors[f"{prefix}unlearn_ratios"] = "all values must lie in (0, 1)"
        return errors


def _default_train() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=20, batch_size=64, seed=0, weight_decay=5e-3)


def _default_distill() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=50, batch_size=32, seed=1,
                       loss="kl_to_targets", stop_loss=1e-6, keep_best=True)


def _default_rectify() -> TrainConfig:
    return TrainConfig(learning_rate=0.01, epochs=2, batch_size=64, seed=2)


def _default_relabel() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=10, batch_size=32, seed=3)


def _default_attack() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=50, batch_size=64, seed=4)


@dataclass
class ExperimentConfig:
    """Configuration for an unlearning experiment"""

    # Required paths
    output_dir: str

    config_version: int = CONFIG_VERSION
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    # Ensemble and request size
    k: int = 5
    unlearn_ratio: float = 0.01

    # Architectures
    hidden_layers: List[int] = field(default_factory=lambda: [64, 32])
    attack_hidden: int = 64

    # Training phases
    train: TrainConfig = field(default_factory=_default_train)
    distill: TrainConfig = field(default_factory=_default_distill)
    rectify: TrainConfig = field(default_factory=_default_rectify)
    relabel: TrainConfig = field(default_factory=_default_relabel)
    attack: TrainConfig = field(default_factory=_default_attack)

    # Experiment protocol
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    mia_repeats: int = 5
    sweep: SweepConfig = field(default_factory=SweepConfig)

    # Execution
    parallel: bool = True
    jobs: Optional[int] = None

    # Logging
    log_level: str = "INFO"

    def __post_init__(self):
        """Validate configuration after initialization"""
        self._validate_config()

    def _validate_config(self):
        """Collect field-level problems and raise them together"""
        errors: Dict[str, str] = {}

        if not self.output_dir:
            errors["output_dir"] = "is required"

        if self.config_version != CONFIG_VERSION:
            errors["config_version"] = f"unsupported version {self.config_version}, expected {CONFIG_VERSION}"

        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            errors["methods"] = f"unknown methods {unknown}; choose from {', '.join(METHODS)}"
        elif not self.methods:
            errors["methods"] = "at least one method is required"

        if self.k < 3 and any(m in ("etid", "retrain_ensemble") for m in self.methods):
            errors["k"] = "ETID ensembles need K >= 3 so every sub-model has a retrained-alike reference"
        elif self.k < 2:
            errors["k"] = "must be >= 2"

        if not 0 < self.unlearn_ratio < 1:
            errors["unlearn_ratio"] = "must lie in (0, 1)"

        if not self.hidden_layers or any(h < 1 for h in self.hidden_layers):
            errors["hidden_layers"] = "must be a non-empty list of positive widths"
        if self.attack_hidden < 1:
            errors["attack_hidden"] = "must be >= 1"

        if not self.seeds:
            errors["seeds"] = "at least one seed is required"
        elif len(set(self.seeds)) != len(self.seeds):
            errors["seeds"] = "seeds must be unique"

        if self.mia_repeats < 2:
            errors["mia_repeats"] = "must be >= 2 for a variance estimate"

        if self.jobs is not None and self.jobs < 1:
            errors["jobs"] = "must be >= 1"

        if self.log_level not in LOG_LEVELS:
            errors["log_level"] = f"must be one of: {', '.join(LOG_LEVELS)}"

        errors.update(self.dataset.validate())
        errors.update(self.sweep.validate())
        for name in ("train", "distill", "rectify", "relabel", "attack"):
            errors.update(getattr(self, name).validate(prefix=f"{name}."))
        if self.distill.loss != "kl_to_targets":
            errors["distill.loss"] = "distillation uses kl_to_targets"

        if errors:
            raise ConfigError(errors)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        """Build a config from nested plain data, merging sections over defaults"""
        data = dict(data or {})
        problems: Dict[str, str] = {}
        known = {f.name for f in dataclass_fields(cls)}
        for key in data:
            if key not in known:
                problems[key] = "unknown field"
        if problems:
            raise ConfigError(problems)

        defaults = cls.__dataclass_fields__
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key == "dataset":
                kwargs[key] = DatasetConfig(**_known_fields(DatasetConfig, value or {}, "dataset."))
            elif key == "sweep":
                kwargs[key] = SweepConfig(**_known_fields(SweepConfig, value or {}, "sweep."))
            elif key in ("train", "distill", "rectify", "relabel", "attack"):
                base = asdict(defaults[key].default_factory())
                base.update(value or {})
                kwargs[key] = TrainConfig.from_dict(base, prefix=f"{key}.")
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_env(cls) -> 'ExperimentConfig':
        """Load configuration from environment variables"""
        jobs = os.environ.get('ETID_JOBS')
        return cls(
            output_dir=os.environ.get('ETID_OUTPUT_DIR', ''),
            jobs=int(jobs) if jobs else None,
            log_level=os.environ.get('ETID_LOG_LEVEL', 'INFO')
        )

    @classmethod
    def from_file(cls, config_path: str) -> 'ExperimentConfig':
        """Load configuration from YAML or JSON file"""
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_path, 'r') as f:
            try:
                if config_path.endswith('.yaml') or config_path.endswith('.yml'):
                    data = yaml.safe_load(f)
                elif config_path.endswith('.json'):
                    data = json.load(f)
                else:
                    raise ConfigError({"config": "Configuration file must be YAML or JSON"})
            except (yaml.YAMLError, json.JSONDecodeError) as e:
                raise ConfigError({"config": f"cannot parse {config_path}: {e}"}) from None

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError({"config": "top level must be a mapping"})
        data.setdefault('output_dir', os.environ.get('ETID_OUTPUT_DIR', ''))
        return cls.from_dict(data)

    def to_file(self, config_path: str):
        """Save configuration to YAML or JSON file"""
        config_dict = self.to_dict()

        with open(config_path, 'w') as f:
            if config_path.endswith('.yaml') or config_path.endswith('.yml'):
                yaml.safe_dump(config_dict, f, default_flow_style=False, indent=2, sort_keys=False)
            elif config_path.endswith('.json'):
                json.dump(config_dict, f, indent=2)
            else:
                raise ConfigError({"config": "Configuration file must be YAML or JSON"})

    def override(self, **changes) -> 'ExperimentConfig':
        """Return a validated copy with top-level fields replaced (None values ignored)"""
        data = self.to_dict()
        for key, value in changes.items():
            if value is not None:
                data[key] = value
        return ExperimentConfig.from_dict(data)

    def create_directories(self):
        """Create necessary output directories"""
        dirs_to_create = [
            self.output_dir,
            os.path.join(self.output_dir, 'data'),
            os.path.join(self.output_dir, 'requests'),
            os.path.join(self.output_dir, 'targets'),
            os.path.join(self.output_dir, 'logs')
        ]

        for directory in dirs_to_create:
            os.makedirs(directory, exist_ok=True)


def _known_fields(cls, data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    known = {f.name for f in dataclass_fields(cls)}
    unknown = [k for k in data if k not in known]
    if unknown:
        raise ConfigError({f"{prefix}{k}": "unknown field" for k in unknown})
    return dict(data)


def create_default_config_file(output_path: str, output_dir: str = "runs/etid"):
    """Create a default configuration file template"""
    ExperimentConfig(output_dir=output_dir).to_file(output_path)
    return output_path


def load_config(config_path: Optional[str] = None,
                use_env: bool = False) -> ExperimentConfig:
    """
    Load configuration with fallback options

    Args:
        config_path: Path to configuration file
        use_env: Whether to use environment variables

    Returns:
        ExperimentConfig instance
    """
    if config_path:
        config = ExperimentConfig.from_file(config_path)
    elif use_env or os.environ.get('ETID_OUTPUT_DIR'):
        config = ExperimentConfig.from_env()
    else:
        raise ConfigError({"config": "No configuration found. Provide --config, --output-dir or set ETID_OUTPUT_DIR"})

    return config
