"""
Dense feedforward classifier: ReLU hidden layers, softmax output, analytic
gradients and mini-batch SGD.

Every model in the toolkit (ensemble sub-models, references, retrained
oracles, membership-inference attack models) is an `MlpModel` trained here.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from config.settings import TrainConfig, LOSS_KINDS
from utils.exceptions import ShapeError, ValidationError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SOFT_TARGET_TOL = 1e-6

Targets = Union[np.ndarray, Sequence[int]]


@dataclass
class MlpModel:
    """Weights are stored `in_dim x out_dim`; biases are 1-D."""

    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    seed: Optional[int] = None

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ValidationError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in self.layer_sizes):
            raise ValidationError(f"layer sizes must be positive: {self.layer_sizes}")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError(f"expected {n_layers} weight/bias pairs for layer sizes {self.layer_sizes}")
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[idx], self.layer_sizes[idx + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ShapeError(f"layer {idx}: weight {w.shape} / bias {b.shape}, expected {expected}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_layers(self) -> int:
        """Number of trainable (weight, bias) layers."""
        return len(self.weights)

    def copy(self) -> 'MlpModel':
        return MlpModel(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
        )

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for p in self.parameters():
            digest.update(np.ascontiguousarray(p, dtype='<f8').tobytes())
        return digest.hexdigest()

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (self.layer_sizes == other.layer_sizes
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())))


def init_model(layer_sizes: Sequence[int], seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases, seed=int(seed))


def as_matrix(X, cols: Optional[int] = None, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    if cols is not None and X.shape[1] != cols:
        raise ShapeError(f"{name} has {X.shape[1]} columns, model expects {cols}")
    return X


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, floored at PROB_FLOOR and renormalised."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    probs = np.maximum(probs, PROB_FLOOR)
    return probs / probs.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def _forward_cache(model: MlpModel, X: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    activations = [X]
    h = X
    last = model.num_layers - 1
    for idx, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if idx < last:
            h = np.maximum(z, 0.0)
            activations.append(h)
        else:
            return activations, z
    raise AssertionError("unreachable")


def forward(model: MlpModel, X) -> np.ndarray:
    """Posterior class distributions, one row per input row."""
    X = as_matrix(X, model.input_dim)
    _, logits = _forward_cache(model, X)
    return softmax(logits)


def _prepare_targets(targets, n_rows: int, n_classes: int, loss: str) -> np.ndarray:
    """Turn hard labels or soft rows into an (n_rows x C) target matrix."""
    if loss not in LOSS_KINDS:
        raise ValidationError(f"unknown loss '{loss}', expected one of {LOSS_KINDS}")

    t = np.asarray(targets)
    if t.ndim == 1:
        if loss == 'kl_to_targets':
            raise ValidationError("kl_to_targets needs soft target rows, got hard labels")
        if t.shape[0] != n_rows:
            raise ShapeError(f"{t.shape[0]} labels for {n_rows} rows")
        labels = t.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValidationError(f"labels must lie in [0, {n_classes})")
        onehot = np.zeros((n_rows, n_classes))
        onehot[np.arange(n_rows), labels] = 1.0
        return onehot

    t = t.astype(np.float64)
    if t.ndim != 2 or t.shape != (n_rows, n_classes):
        raise ShapeError(f"soft targets have shape {t.shape}, expected {(n_rows, n_classes)}")
    if not np.all(np.isfinite(t)) or np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > SOFT_TARGET_TOL):
        raise ValidationError("soft target rows must be non-negative and sum to 1 within 1e-6")
    return t


def _loss_value(log_probs: np.ndarray, target: np.ndarray, loss: str) -> float:
    log_q = np.maximum(log_probs, np.log(PROB_FLOOR))
    if loss == 'cross_entropy':
        return float(-(target * log_q).sum(axis=1).mean())
    # KL(target || model); zero-probability target entries contribute nothing
    log_p = np.log(np.maximum(target, PROB_FLOOR))
    per_row = np.where(target > 0, target * (log_p - log_q), 0.0).sum(axis=1)
    return float(max(per_row.mean(), 0.0))


def loss_and_grads(model: MlpModel, X, targets, loss: str) -> Tuple[float, List[np.ndarray]]:
    """
    Mean loss over rows and its gradient for every parameter, in the order
    of `MlpModel.parameters()` (w0, b0, w1, b1, ...).

    Both losses share the logit gradient `p_model - target` for rows whose
    target sums to one.
    """
    X = as_matrix(X, model.input_dim)
    target = _prepare_targets(targets, X.shape[0], model.num_classes, loss)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("loss requires at least one row")

    activations, logits = _forward_cache(model, X)
    log_probs = _log_softmax(logits)
    value = _loss_value(log_probs, target, loss)

    delta = (np.exp(log_probs) - target) / n
    grads: List[np.ndarray] = []
    for idx in range(model.num_layers - 1, -1, -1):
        h = activations[idx]
        grads.append(delta.sum(axis=0))
        grads.append(h.T @ delta)
        if idx > 0:
            delta = (delta @ model.weights[idx].T) * (h > 0)
    grads.reverse()
    return value, grads


def evaluate_loss(model: MlpModel, X, targets, loss: str) -> float:
    X = as_matrix(X, model.input_dim)
    target = _prepare_targets(targets, X.shape[0], model.num_classes, loss)
    _, logits = _forward_cache(model, X)
    return _loss_value(_log_softmax(logits), target, loss)


@dataclass
class TrainHistory:
    """Full-data objective before training and after every epoch."""

    losses: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    returned_loss: Optional[float] = None

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        """Objective of the returned parameters."""
        if self.returned_loss is not None:
            return self.returned_loss
        return self.losses[-1]


BatchHook = Callable[[np.ndarray], None]


def train_with_history(model: MlpModel, X, targets, config: TrainConfig,
                       ids: Optional[np.ndarray] = None,
                       on_batch: Optional[BatchHook] = None) -> Tuple[MlpModel, TrainHistory]:
    """
    Mini-batch SGD on a copy of `model`.

    `ids` labels the rows of X; when given, `on_batch` receives the ids of
    every batch before its gradient step.
    """
    X = as_matrix(X, model.input_dim)
    target = _prepare_targets(targets, X.shape[0], model.num_classes, config.loss)
    n = X.shape[0]
    if ids is not None:
        ids = np.asarray(ids)
        if ids.shape[0] != n:
            raise ShapeError(f"{ids.shape[0]} ids for {n} rows")

    trained = model.copy()
    history = TrainHistory()
    if config.epochs == 0 or n == 0:
        if n:
            history.losses.append(evaluate_loss(trained, X, target, config.loss))
        return trained, history

    rng = np.random.default_rng(config.seed)
    history.losses.append(evaluate_loss(trained, X, target, config.loss))
    best = trained.copy() if config.keep_best else None
    best_loss = history.losses[0]

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            if on_batch is not None and ids is not None:
                on_batch(ids[batch])
            _, grads = loss_and_grads(trained, X[batch], target[batch], config.loss)
            params = trained.parameters()
            for p, g in zip(params, grads):
                p -= config.learning_rate * g
            if config.weight_decay:
                for w in trained.weights:
                    w *= 1.0 - config.learning_rate * config.weight_decay

        epoch_loss = evaluate_loss(trained, X, target, config.loss)
        if not np.isfinite(epoch_loss):
            raise ValidationError(f"training diverged at epoch {epoch}; lower the learning rate")
        history.losses.append(epoch_loss)

        if config.keep_best and epoch_loss < best_loss:
            best, best_loss = trained.copy(), epoch_loss
            history.best_epoch = epoch

        if config.stop_loss is not None and epoch_loss < config.stop_loss:
            history.stopped_early = True
            logger.debug(f"Early stop at epoch {epoch}: loss {epoch_loss:.3e} < {config.stop_loss:.1e}")
            break

    if config.keep_best and best is not None:
        history.returned_loss = best_loss
        return best, history
    history.best_epoch = len(history.losses) - 1
    return trained, history


def train(model: MlpModel, X, targets, config: TrainConfig,
          ids: Optional[np.ndarray] = None, on_batch: Optional[BatchHook] = None) -> MlpModel:
    """Train a copy of `model`; the input model is left untouched."""
    trained, _ = train_with_history(model, X, targets, config, ids=ids, on_batch=on_batch)
    return trained


def predict_labels(model, X) -> np.ndarray:
    return np.argmax(model.predict_proba(X), axis=1)
