"""
Utilities module for the unlearning pipeline.
"""

from .exceptions import (
    ValidationError,
    ShapeError,
    ParseError,
    FormatError,
    VersionMismatchError,
    ConfigError,
    ValidityExpired,
    QuarantineViolation,
    ReferenceChanged,
)
from .seeding import derive_seed
from .parallel import run_jobs

__all__ = [
    'ValidationError',
    'ShapeError',
    'ParseError',
    'FormatError',
    'VersionMismatchError',
    'ConfigError',
    'ValidityExpired',
    'QuarantineViolation',
    'ReferenceChanged',
    'derive_seed',
    'run_jobs',
]
