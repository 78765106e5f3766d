"""
Dense feedforward networks used for every model in the toolkit.
"""

from .mlp import (
    MlpModel,
    TrainHistory,
    init_model,
    forward,
    softmax,
    loss_and_grads,
    evaluate_loss,
    train,
    train_with_history,
    predict_labels,
)
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    'MlpModel',
    'TrainHistory',
    'init_model',
    'forward',
    'softmax',
    'loss_and_grads',
    'evaluate_loss',
    'train',
    'train_with_history',
    'predict_labels',
    'save_checkpoint',
    'load_checkpoint',
]
