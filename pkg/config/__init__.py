"""
Configuration for the unlearning pipeline.
"""

from .settings import (
    TrainConfig,
    DatasetConfig,
    SweepConfig,
    ExperimentConfig,
    load_config,
    create_default_config_file,
)

__all__ = [
    'TrainConfig',
    'DatasetConfig',
    'SweepConfig',
    'ExperimentConfig',
    'load_config',
    'create_default_config_file',
]
