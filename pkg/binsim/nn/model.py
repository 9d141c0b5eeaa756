"""
Toy binarized models.

The first and last layers hold real-valued weights; the layers in
between binarize their inputs and latent weights and score them with a
pluggable similarity measure.
"""

import logging
from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..core.measure import EvalStats, MeasureExpr
from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    GlobalAvgPool,
    HardTanh,
    Layer,
    MeasureConv2d,
    MeasureDense,
    _MeasureLayer,
)

logger = logging.getLogger(__name__)

MODEL_VARIANTS = ("mlp", "conv")


class ToyModel:
    """Sequential stack of layers with named, checkpointable state."""

    def __init__(self, layers: List[Layer], variant: str):
        self.layers = layers
        self.variant = variant

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def post_step(self):
        for layer in self.layers:
            layer.post_step()

    def named_parameters(self) -> Iterator[Tuple[str, Layer, str]]:
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"layers.{i}.{name}", layer, name

    def measure_layers(self) -> List[_MeasureLayer]:
        return [layer for layer in self.layers if isinstance(layer, _MeasureLayer)]

    def guard_stats(self) -> EvalStats:
        total = EvalStats()
        for layer in self.measure_layers():
            total.merge(layer.stats)
        return total

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            for name, value in list(layer.params.items()) + list(layer.buffers.items()):
                state[f"layers.{i}.{name}"] = value.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        expected = self.state_dict()
        missing = sorted(set(expected) - set(state))
        unexpected = sorted(set(state) - set(expected))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for key, value in state.items():
            _, index, name = key.split(".", 2)
            layer = self.layers[int(index)]
            target = layer.params if name in layer.params else layer.buffers
            if target[name].shape != value.shape:
                raise ValueError(f"{key}: shape {value.shape} != {target[name].shape}")
            target[name] = np.asarray(value, dtype=np.float64).copy()


def build_model(variant: str, expr: MeasureExpr, input_shape: Tuple[int, int, int], num_classes: int,
                rng: np.random.Generator, normalize_counts: bool = False,
                bn_momentum: float = 0.1) -> ToyModel:
    """
    ``mlp``: FP dense -> 128, BN, clamp, measure dense 128 -> 128, BN, clamp, FP head.
    ``conv``: FP 3x3 conv -> 16, BN, clamp, two stride-2 measure convs 16 -> 32 -> 64
    each with BN and clamp, global average pool, FP head.
    """
    height, width, channels = input_shape
    if variant == "mlp":
        layers: List[Layer] = [
            Flatten(),
            Dense(height * width * channels, 128, rng),
            BatchNorm(128, bn_momentum),
            HardTanh(),
            MeasureDense(128, 128, expr, rng, normalize=normalize_counts),
            BatchNorm(128, bn_momentum),
            HardTanh(),
            Dense(128, num_classes, rng),
        ]
    elif variant == "conv":
        layers = [
            Conv2d(channels, 16, rng),
            BatchNorm(16, bn_momentum),
            HardTanh(),
            MeasureConv2d(16, 32, expr, rng, stride=2, normalize=normalize_counts),
            BatchNorm(32, bn_momentum),
            HardTanh(),
            MeasureConv2d(32, 64, expr, rng, stride=2, normalize=normalize_counts),
            BatchNorm(64, bn_momentum),
            HardTanh(),
            GlobalAvgPool(),
            Dense(64, num_classes, rng),
        ]
    else:
        raise ValueError(f"unknown model variant {variant!r}; expected one of {MODEL_VARIANTS}")
    logger.debug(f"Built {variant} model for input {input_shape} with measure {expr.genome}")
    return ToyModel(layers, variant)
