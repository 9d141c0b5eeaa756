"""
Fitness of a candidate measure.

A candidate is trained for ``reject_epoch`` epochs; if its validation
accuracy at that point is below the current threshold it is discarded
with that accuracy as its fitness. Otherwise training continues to the
full epoch budget and the final accuracy is the fitness.
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..data.dataset import Dataset, split
from ..nn.trainer import TrainingDivergedError, train
from ..utils.logging import get_timestamp
from ..utils.schema_validator import TrainConfig
from .measure import Genome, decode, parse_genome, serialize_genome
from .workspace_manager import JsonlWriter

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.11, 0.25, 0.35, 0.40)
REFERENCE_CHANCE = 0.1
MAX_THRESHOLD = 0.95


@dataclass
class FitnessRecord:
    """Outcome of one fitness evaluation."""
    genome: Genome
    accuracy_trace: List[float]
    fitness: float
    rejected: bool
    threshold_used: float
    wall_time: float = 0.0
    epochs_run: int = 0
    diverged: bool = False
    diverged_epoch: Optional[int] = None
    error: Optional[str] = None

    @classmethod
    def failure(cls, genome: Genome, threshold: float, error: str) -> "FitnessRecord":
        """Zero-fitness rejection for an evaluation that raised."""
        return cls(genome=genome, accuracy_trace=[0.0], fitness=0.0, rejected=True,
                   threshold_used=threshold, epochs_run=1, error=error)

    @classmethod
    def divergence(cls, genome: Genome, threshold: float, epoch: int, wall_time: float = 0.0) -> "FitnessRecord":
        """Zero-fitness rejection for training that went non-finite in ``epoch``."""
        return cls(genome=genome, accuracy_trace=[0.0], fitness=0.0, rejected=True,
                   threshold_used=threshold, wall_time=wall_time, epochs_run=1,
                   diverged=True, diverged_epoch=epoch)

    @property
    def epochs_trained(self) -> int:
        """Training epochs actually spent, including those before a divergence."""
        if self.error is not None:
            return 0
        return self.diverged_epoch if self.diverged_epoch is not None else self.epochs_run

    def to_dict(self) -> Dict[str, Any]:
        return {
            "genome": serialize_genome(self.genome),
            "accuracy_trace": list(self.accuracy_trace),
            "fitness": self.fitness,
            "rejected": self.rejected,
            "threshold_used": self.threshold_used,
            "wall_time": self.wall_time,
            "epochs_run": self.epochs_run,
            "diverged": self.diverged,
            "diverged_epoch": self.diverged_epoch,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitnessRecord":
        return cls(
            genome=parse_genome(data["genome"]),
            accuracy_trace=[float(a) for a in data["accuracy_trace"]],
            fitness=float(data["fitness"]),
            rejected=bool(data["rejected"]),
            threshold_used=float(data["threshold_used"]),
            wall_time=float(data.get("wall_time", 0.0)),
            epochs_run=int(data.get("epochs_run", 0)),
            diverged=bool(data.get("diverged", False)),
            diverged_epoch=data.get("diverged_epoch"),
            error=data.get("error"),
        )


def chance_ratio_for(num_classes: int) -> float:
    """Chance accuracy of a K-class problem relative to the 10-class reference."""
    return (1.0 / num_classes) / REFERENCE_CHANCE


def threshold_for(stage: int, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                  chance_ratio: float = 1.0) -> float:
    """Early-rejection bar of a schedule stage.

    A ``chance_ratio`` other than 1 rescales the bar for datasets whose chance
    accuracy is not 10%; scaled bars are clamped to [0, 0.95].
    """
    if not 0 <= stage < len(thresholds):
        raise IndexError(f"stage {stage} outside [0, {len(thresholds)})")
    if chance_ratio == 1.0:
        return float(thresholds[stage])
    return min(max(thresholds[stage] * chance_ratio, 0.0), MAX_THRESHOLD)


def evaluate(genome: Genome, threshold: float, config: TrainConfig,
             train_set: Dataset, val_set: Dataset) -> FitnessRecord:
    """Train the toy model with ``genome``'s measure under early rejection."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    expr = decode(genome)
    start = time.perf_counter()
    rejected = False

    def stop(epoch: int, accuracy: float) -> bool:
        nonlocal rejected
        if epoch == config.reject_epoch and accuracy < threshold:
            rejected = True
            return True
        return False

    try:
        trainer, trace = train(config, train_set, val_set, expr, stop=stop)
    except TrainingDivergedError as e:
        logger.warning(f"Measure {genome} diverged in epoch {e.epoch}")
        return FitnessRecord.divergence(genome, threshold, e.epoch, time.perf_counter() - start)

    guards = trainer.model.guard_stats()
    if guards.total:
        logger.debug(f"Measure {genome}: {guards.total} guard activations")
    return FitnessRecord(
        genome=genome,
        accuracy_trace=trace,
        fitness=trace[-1],
        rejected=rejected,
        threshold_used=threshold,
        wall_time=time.perf_counter() - start,
        epochs_run=trainer.epochs_run,
    )


class FitnessEvaluator:
    """
    Callable ``(genome, threshold) -> FitnessRecord`` for the search.

    Owns the train/validation split and the training protocol. Every
    evaluation is appended to an optional JSON-lines ledger. Instances
    may be called from several threads on distinct genomes.
    """

    def __init__(self, config: TrainConfig, train_set: Dataset, val_set: Dataset,
                 ledger_path: Optional[Union[str, Path]] = None):
        self.config = config
        self.train_set = train_set
        self.val_set = val_set
        self.ledger = JsonlWriter(Path(ledger_path)) if ledger_path else None
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_dataset(cls, config: TrainConfig, dataset: Dataset,
                     ledger_path: Optional[Union[str, Path]] = None) -> "FitnessEvaluator":
        train_set, val_set = split(dataset, config.validation_fraction, config.seed)
        return cls(config, train_set, val_set, ledger_path)

    @property
    def epoch_budget(self) -> int:
        return self.config.epochs

    def __call__(self, genome: Genome, threshold: float) -> FitnessRecord:
        with self._lock:
            self.calls += 1
        record = evaluate(genome, threshold, self.config, self.train_set, self.val_set)
        status = "diverged" if record.diverged else "rejected" if record.rejected else "accepted"
        logger.info(f"Measure {genome}: fitness={record.fitness:.4f} ({status}, {record.epochs_run} epochs)")
        if self.ledger is not None:
            self.ledger.append({"timestamp": get_timestamp(), **record.to_dict()})
        return record


def surrogate_evaluate(genome: Genome, target: Genome) -> float:
    """1 - hamming(genome, target) / 7; the unique optimum is ``target``."""
    distance = sum(1 for g, t in zip(genome.genes, target.genes) if g != t)
    return 1.0 - distance / len(target.genes)


@dataclass
class SurrogateFitness:
    """Training-free fitness with a planted optimum, for exercising the search."""
    target: Genome
    epoch_budget: int = 15
    calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __call__(self, genome: Genome, threshold: float) -> FitnessRecord:
        with self._lock:
            self.calls += 1
        value = surrogate_evaluate(genome, self.target)
        rejected = value < threshold
        return FitnessRecord(
            genome=genome,
            accuracy_trace=[value],
            fitness=value,
            rejected=rejected,
            threshold_used=threshold,
            epochs_run=1 if rejected else self.epoch_budget,
        )
