"""
Error types for the unlearning toolkit.
"""

from typing import Dict, Optional, Tuple


class ValidationError(ValueError):
    """Invalid argument, id set, ratio or parameter."""


class ShapeError(ValidationError):
    """Matrix dimensions do not agree."""


class ParseError(ValidationError):
    """Malformed input record."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ValueError):
    """Corrupt or unreadable checkpoint / manifest."""


class VersionMismatchError(FormatError):
    """File written with an unsupported format version."""


class ConfigError(ValueError):
    """Configuration failed validation; `fields` maps field name to message."""

    def __init__(self, fields: Dict[str, str]):
        self.fields = dict(fields)
        detail = "; ".join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
        super().__init__(f"Invalid configuration: {detail}")


class ValidityExpired(RuntimeError):
    """
    The retrained-alike condition no longer holds for some (reference, target)
    pair. The ensemble has to be rebuilt on the remaining data.
    """

    def __init__(self, failing: Dict[Tuple[int, int], float]):
        self.failing = dict(failing)
        worst = min(self.failing.values()) if self.failing else float("nan")
        pairs = ", ".join(f"({i},{j})={r:.3f}" for (i, j), r in sorted(self.failing.items()))
        super().__init__(
            f"Reference models are no longer retrained-alike (min ratio {worst:.3f} < 1): {pairs}. "
            "Rebuild the ensemble on the remaining data before serving further requests."
        )


class QuarantineViolation(RuntimeError):
    """An erased, in-flight or held-out sample id reached a training batch."""


class ReferenceChanged(RuntimeError):
    """A reference snapshot was modified while its request was being served."""
