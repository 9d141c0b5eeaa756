"""
Tests for fitness evaluation: threshold schedule, early rejection,
divergence handling and the surrogate fitness.
"""

import pytest
import sys
from pathlib import Path

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from binsim.core import fitness as fitness_module
from binsim.core.fitness import (
    FitnessEvaluator,
    FitnessRecord,
    SurrogateFitness,
    chance_ratio_for,
    evaluate,
    surrogate_evaluate,
    threshold_for,
)
from binsim.core.measure import BASELINE_GENOME, Genome, decode
from binsim.core.search import GeneticSearch, Individual
from binsim.core.workspace_manager import read_jsonl
from binsim.data.dataset import split, synthesize
from binsim.nn.trainer import TrainingDivergedError, train
from binsim.utils.schema_validator import SearchConfig, TrainConfig

ZERO_MEASURE = Genome(1, 1, 1, 1, 0, 0, 0)


@pytest.fixture(scope="module")
def ten_class_split():
    dataset = synthesize(seed=0, samples=200, classes=10, shape=(4, 4, 1))
    return split(dataset, 0.2, seed=0)


class TestThresholds:
    """Stage bars and chance scaling."""

    def test_default_schedule(self):
        assert threshold_for(0) == pytest.approx(0.11)
        assert threshold_for(1) == pytest.approx(0.25)
        assert threshold_for(3) == pytest.approx(0.40)

    def test_stage_out_of_range(self):
        with pytest.raises(IndexError):
            threshold_for(4)
        with pytest.raises(IndexError):
            threshold_for(-1)

    def test_chance_ratio(self):
        assert chance_ratio_for(10) == pytest.approx(1.0)
        assert chance_ratio_for(2) == pytest.approx(5.0)

    def test_scaled_thresholds_are_clamped(self):
        assert threshold_for(0, chance_ratio=5.0) == pytest.approx(0.55)
        assert threshold_for(1, chance_ratio=5.0) == pytest.approx(0.95)
        assert threshold_for(3, chance_ratio=chance_ratio_for(2)) == pytest.approx(0.95)

    def test_unscaled_bar_is_taken_as_given(self):
        assert threshold_for(0, thresholds=[1.0]) == 1.0


class TestEvaluate:
    """Training-backed fitness."""

    def test_zero_measure_rejected_after_one_epoch(self, ten_class_split):
        train_set, val_set = ten_class_split
        config = TrainConfig(epochs=15, reject_epoch=1, batch_size=32)
        record = evaluate(ZERO_MEASURE, 0.11, config, train_set, val_set)
        assert record.rejected
        assert record.epochs_run == 1
        assert len(record.accuracy_trace) == 1
        assert record.fitness == pytest.approx(0.1)
        assert record.threshold_used == 0.11

    def test_zero_threshold_trains_full_budget(self, ten_class_split):
        train_set, val_set = ten_class_split
        config = TrainConfig(epochs=2, reject_epoch=1, batch_size=32)
        record = evaluate(ZERO_MEASURE, 0.0, config, train_set, val_set)
        assert not record.rejected
        assert record.epochs_run == 2
        assert record.fitness == record.accuracy_trace[-1]

    def test_invalid_threshold(self, ten_class_split):
        train_set, val_set = ten_class_split
        with pytest.raises(ValueError):
            evaluate(BASELINE_GENOME, 1.5, TrainConfig(epochs=1), train_set, val_set)

    def test_divergence_scores_zero(self, ten_class_split, monkeypatch):
        train_set, val_set = ten_class_split

        def diverging_train(*args, **kwargs):
            raise TrainingDivergedError(3, float("nan"))

        monkeypatch.setattr(fitness_module, "train", diverging_train)
        record = evaluate(BASELINE_GENOME, 0.11, TrainConfig(epochs=5), train_set, val_set)
        assert record.diverged and record.rejected
        assert record.fitness == 0.0
        assert record.accuracy_trace == [0.0]
        assert record.fitness == record.accuracy_trace[0]
        assert record.epochs_run == 1
        assert record.diverged_epoch == 3
        assert record.epochs_trained == 3

    def test_diverged_individual_counts_one_epoch(self, ten_class_split, monkeypatch):
        train_set, val_set = ten_class_split

        def diverging_train(*args, **kwargs):
            raise TrainingDivergedError(4, float("inf"))

        monkeypatch.setattr(fitness_module, "train", diverging_train)
        record = evaluate(BASELINE_GENOME, 0.11, TrainConfig(epochs=5), train_set, val_set)
        member = Individual.from_record(record)
        assert member.rejected and member.epochs == 1
        assert member.fitness == 0.0


class TestFitnessEvaluator:
    """Callable wrapper with a JSON-lines ledger."""

    def test_ledger_and_call_count(self, tmp_path):
        dataset = synthesize(seed=0, samples=40, classes=4, shape=(2, 2, 1))
        ledger = tmp_path / "logs" / "evaluations.jsonl"
        evaluator = FitnessEvaluator.from_dataset(TrainConfig(epochs=1, batch_size=16), dataset, ledger)
        record = evaluator(BASELINE_GENOME, 0.0)
        assert evaluator.calls == 1
        assert evaluator.epoch_budget == 1
        rows = list(read_jsonl(ledger))
        assert len(rows) == 1
        assert rows[0]["genome"] == "0,0,0,0,0,0,1"
        assert rows[0]["fitness"] == record.fitness


class TestRecords:
    """Record serialization."""

    def test_dict_round_trip(self):
        record = FitnessRecord(genome=Genome(3, 0, 3, 0, 0, 1, 6), accuracy_trace=[0.2, 0.3], fitness=0.3,
                               rejected=False, threshold_used=0.11, wall_time=1.5, epochs_run=2)
        assert FitnessRecord.from_dict(record.to_dict()) == record

    def test_failure(self):
        record = FitnessRecord.failure(BASELINE_GENOME, 0.25, "boom")
        assert record.fitness == 0.0 and record.rejected
        assert record.error == "boom"
        assert record.accuracy_trace == [0.0]
        assert record.epochs_run == 1
        assert record.epochs_trained == 0

    def test_divergence_round_trip(self):
        record = FitnessRecord.divergence(Genome(3, 0, 3, 0, 0, 1, 6), 0.11, epoch=7, wall_time=0.25)
        restored = FitnessRecord.from_dict(record.to_dict())
        assert restored == record
        assert restored.diverged_epoch == 7


class TestSurrogate:
    """Training-free fitness with a planted optimum."""

    def test_hamming_similarity(self):
        target = Genome(3, 0, 3, 0, 0, 1, 6)
        assert surrogate_evaluate(target, target) == 1.0
        assert surrogate_evaluate(Genome(3, 0, 3, 0, 0, 1, 5), target) == pytest.approx(6 / 7)
        assert surrogate_evaluate(Genome(0, 1, 0, 1, 1, 0, 0), target) == 0.0

    def test_rejection_and_epochs(self):
        fitness = SurrogateFitness(Genome(3, 0, 3, 0, 0, 1, 6), epoch_budget=15)
        low = fitness(Genome(0, 1, 0, 1, 1, 0, 0), 0.11)
        high = fitness(Genome(3, 0, 3, 0, 0, 1, 6), 0.11)
        assert low.rejected and low.epochs_run == 1
        assert not high.rejected and high.epochs_run == 15
        assert fitness.calls == 2

    def test_deterministic(self):
        fitness = SurrogateFitness(BASELINE_GENOME)
        genome = Genome(0, 0, 0, 0, 0, 0, 2)
        assert fitness(genome, 0.1) == fitness(genome, 0.1)


@pytest.fixture(scope="module")
def desk_split():
    dataset = synthesize(seed=7, samples=1000, classes=10, shape=(16, 16, 1), noise=0.1)
    return split(dataset, 0.2, seed=0)


@pytest.mark.slow
class TestDeskScale:
    """Default protocol on the default synthetic dataset."""

    def test_baseline_beats_chance(self, desk_split):
        train_set, val_set = desk_split
        record = evaluate(BASELINE_GENOME, 0.0, TrainConfig(), train_set, val_set)
        assert record.epochs_run == 15
        assert record.fitness >= 1.5 * (1.0 / 10)

    def test_early_rejection_separates_zero_from_baseline(self, desk_split):
        train_set, val_set = desk_split
        config = TrainConfig(epochs=3)
        zero = evaluate(ZERO_MEASURE, 0.11, config, train_set, val_set)
        baseline = evaluate(BASELINE_GENOME, 0.11, config, train_set, val_set)
        assert zero.rejected and zero.epochs_run == 1
        assert len(zero.accuracy_trace) == 1
        assert not baseline.rejected
        assert len(baseline.accuracy_trace) == 3
        assert zero.fitness <= baseline.fitness

    def test_zero_measure_stays_at_chance(self, desk_split):
        train_set, val_set = desk_split
        record = evaluate(ZERO_MEASURE, 0.0, TrainConfig(epochs=3), train_set, val_set)
        assert all(abs(acc - 0.1) <= 0.03 for acc in record.accuracy_trace)

    def test_loss_decreases_over_first_epochs(self, desk_split):
        train_set, val_set = desk_split
        drops = []
        for seed in range(5):
            trainer, _ = train(TrainConfig(epochs=3, seed=seed), train_set, val_set, decode(BASELINE_GENOME))
            drops.append(trainer.loss_history[0] - trainer.loss_history[2])
        assert np.median(drops) > 0

    def test_noise_free_classes_are_learned(self):
        dataset = synthesize(seed=7, samples=1000, classes=10, shape=(16, 16, 1), noise=0.0)
        train_set, val_set = split(dataset, 0.2, seed=0)
        record = evaluate(BASELINE_GENOME, 0.0, TrainConfig(epochs=5), train_set, val_set)
        assert record.fitness >= 0.99

    def test_trained_search_matches_or_beats_baseline(self, desk_split):
        train_set, val_set = desk_split
        config = TrainConfig(epochs=3)
        evaluator = FitnessEvaluator(config, train_set, val_set)
        search = GeneticSearch(SearchConfig(population_size=6, max_generations=10, stagnation_window=10,
                                            checkpoint_every=0),
                               evaluator, seed=0, epoch_budget=config.epochs)
        result = search.run()
        baseline = evaluate(BASELINE_GENOME, 0.0, config, train_set, val_set)
        assert result.stop_reason in ("max_generations", "converged")
        assert len(result.population) == 6
        assert result.population.best.fitness >= baseline.fitness


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
