"""
Training loop: Adam at a constant learning rate, softmax cross-entropy,
per-epoch top-1 validation accuracy.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from ..core.measure import MeasureExpr
from ..data.dataset import Dataset
from ..utils.schema_validator import TrainConfig
from .model import ToyModel, build_model

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged in epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class EmptyDatasetError(ValueError):
    """Raised when training or validation is asked to run on zero samples."""
    pass


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean loss and its gradient w.r.t. the logits."""
    batch = logits.shape[0]
    rows = np.arange(batch)
    loss = float(-log_softmax(logits, axis=1)[rows, labels].mean())
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / batch


class Adam:
    """Adam with bias correction, updating model parameters in place."""

    def __init__(self, model: ToyModel, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.model = model
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for key, layer, name in self.model.named_parameters():
            grad = layer.grads.get(name)
            if grad is None:
                continue
            m = self.m.setdefault(key, np.zeros_like(grad))
            v = self.v.setdefault(key, np.zeros_like(grad))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            layer.params[name] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def validate(model: ToyModel, dataset: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy; logit ties resolve to the lowest class index."""
    if len(dataset) == 0:
        raise EmptyDatasetError(f"{dataset.split} set is empty")
    features = dataset.features
    correct = 0
    for start in range(0, len(dataset), batch_size):
        logits = model.forward(features[start:start + batch_size], training=False)
        correct += int(np.sum(np.argmax(logits, axis=1) == dataset.labels[start:start + batch_size]))
    return correct / len(dataset)


class Trainer:
    """
    Owns one model's optimization state.

    ``epochs_run`` counts completed training epochs; fitness evaluation
    reads it to prove early rejection stopped after the check epoch.
    """

    def __init__(self, model: ToyModel, train_set: Dataset, val_set: Dataset, config: TrainConfig):
        if len(train_set) == 0:
            raise EmptyDatasetError("training set is empty")
        if len(val_set) == 0:
            raise EmptyDatasetError("validation set is empty")
        self.model = model
        self.train_set = train_set
        self.val_set = val_set
        self.config = config
        self.optimizer = Adam(model, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
        self._shuffle_rng = np.random.default_rng([config.seed, 1])
        self._features = train_set.features
        self._labels = train_set.labels.astype(np.int64)
        self.epochs_run = 0
        self.loss_history: List[float] = []

    def run_epoch(self) -> float:
        """One pass over the training set; returns the mean batch loss."""
        epoch = self.epochs_run + 1
        n = len(self.train_set)
        order = self._shuffle_rng.permutation(n) if self.config.shuffle else np.arange(n)
        losses = []
        for start in range(0, n, self.config.batch_size):
            idx = order[start:start + self.config.batch_size]
            logits = self.model.forward(self._features[idx], training=True)
            loss, grad = softmax_cross_entropy(logits, self._labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            self.model.backward(grad)
            self.optimizer.step()
            self.model.post_step()
            losses.append(loss)
        self.epochs_run = epoch
        mean_loss = float(np.mean(losses))
        self.loss_history.append(mean_loss)
        return mean_loss

    def validate(self) -> float:
        return validate(self.model, self.val_set, max(self.config.batch_size, 256))

    def train(self, epochs: Optional[int] = None,
              stop: Optional[Callable[[int, float], bool]] = None) -> List[float]:
        """
        Train for ``epochs`` (default: config.epochs) and return the
        validation accuracy after each epoch. ``stop(epoch, accuracy)``
        returning True ends training after that epoch.
        """
        trace: List[float] = []
        for _ in range(epochs if epochs is not None else self.config.epochs):
            loss = self.run_epoch()
            accuracy = self.validate()
            trace.append(accuracy)
            logger.debug(f"epoch {self.epochs_run}: loss={loss:.4f} val_acc={accuracy:.4f}")
            if stop is not None and stop(self.epochs_run, accuracy):
                break
        return trace


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset, expr: MeasureExpr,
          stop: Optional[Callable[[int, float], bool]] = None) -> Tuple[Trainer, List[float]]:
    """Build the configured model around ``expr`` and train it."""
    rng = np.random.default_rng([config.seed, 0])
    model = build_model(config.model, expr, train_set.shape, train_set.num_classes, rng,
                        normalize_counts=config.normalize_counts, bn_momentum=config.bn_momentum)
    trainer = Trainer(model, train_set, val_set, config)
    return trainer, trainer.train(stop=stop)
