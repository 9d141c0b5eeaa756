"""
Toy binarized network: layers, models, training and model files.
"""

from .checkpoint import ModelFormatError, load_model, save_model
from .layers import MeasureConv2d, MeasureDense, binarize, ste_grad
from .model import ToyModel, build_model
from .trainer import EmptyDatasetError, Trainer, TrainingDivergedError, train, validate

__all__ = [
    "ModelFormatError",
    "load_model",
    "save_model",
    "MeasureConv2d",
    "MeasureDense",
    "binarize",
    "ste_grad",
    "ToyModel",
    "build_model",
    "EmptyDatasetError",
    "Trainer",
    "TrainingDivergedError",
    "train",
    "validate",
]
