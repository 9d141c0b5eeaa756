"""
Steady-state genetic search over measure genomes.

One offspring per generation: pick two parents with a randomly chosen
selection scheme (elitism, tournament or fitness-proportionate), splice
them at a single point, mutate one gene, and replace the weakest member
if the child is strictly fitter. The population stays sorted by fitness
(descending, ties in insertion order) and its size never changes.

Fitness functions are callables ``(genome, threshold) -> FitnessRecord``.
Every genome is evaluated at most once per run; results live in a
thread-safe cache that is saved with each checkpoint.
"""

import bisect
import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ..utils.cost_calculator import SearchCost, record_cache_hit, record_evaluation
from ..utils.logging import EnhancedLogger, ErrorCategory, get_timestamp
from ..utils.schema_validator import SearchConfig
from .fitness import FitnessRecord, threshold_for
from .measure import (
    BASELINE_GENOME,
    GENOME_LENGTH,
    Genome,
    decode,
    gene_domain,
    parse_genome,
    random_genome,
    serialize_genome,
)
from .workspace_manager import JsonlWriter, read_json, write_json_atomic

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1

FitnessFn = Callable[[Genome, float], FitnessRecord]

SELECTION_METHODS = ("elitism", "tournament", "proportionate")


class InitializationError(RuntimeError):
    """Raised when the draw budget runs out before the population is filled."""

    def __init__(self, message: str, threshold: float):
        super().__init__(message)
        self.threshold = threshold


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be written or read."""
    pass


@dataclass
class Individual:
    genome: Genome
    fitness: float
    rejected: bool = False
    epochs: int = 0

    @classmethod
    def from_record(cls, record: FitnessRecord) -> "Individual":
        return cls(record.genome, record.fitness, record.rejected, record.epochs_run)

    def to_dict(self) -> Dict[str, Any]:
        return {"genome": serialize_genome(self.genome), "fitness": self.fitness,
                "rejected": self.rejected, "epochs": self.epochs}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Individual":
        return cls(parse_genome(data["genome"]), float(data["fitness"]),
                   bool(data["rejected"]), int(data["epochs"]))


class Population:
    """Members sorted by fitness descending; equal fitness keeps insertion order."""

    def __init__(self, members: Optional[List[Individual]] = None):
        # sorted() is stable, so ties keep the order given
        self.members: List[Individual] = sorted(members or [], key=lambda m: -m.fitness)

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, index) -> Individual:
        return self.members[index]

    def __iter__(self):
        return iter(self.members)

    @property
    def best(self) -> Individual:
        return self.members[0]

    @property
    def weakest(self) -> Individual:
        return self.members[-1]

    def fitnesses(self) -> np.ndarray:
        return np.array([m.fitness for m in self.members], dtype=np.float64)

    def median(self) -> float:
        return float(np.median(self.fitnesses()))

    def contains(self, genome: Genome) -> bool:
        return any(m.genome == genome for m in self.members)

    def replace_weakest(self, individual: Individual):
        """Drop the last member and insert ``individual`` after any member of equal fitness."""
        self.members.pop()
        keys = [-m.fitness for m in self.members]
        self.members.insert(bisect.bisect_right(keys, -individual.fitness), individual)

    def copy(self) -> "Population":
        return Population([Individual(m.genome, m.fitness, m.rejected, m.epochs) for m in self.members])


class FitnessCache:
    """
    Genome -> FitnessRecord, safe to share between threads.

    Concurrent requests for the same genome wait for the first one, so
    each genome is evaluated exactly once.
    """

    def __init__(self):
        self._records: Dict[Genome, FitnessRecord] = {}
        self._pending: Dict[Genome, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __contains__(self, genome: Genome) -> bool:
        with self._lock:
            return genome in self._records

    def get(self, genome: Genome) -> Optional[FitnessRecord]:
        with self._lock:
            return self._records.get(genome)

    def records(self) -> List[FitnessRecord]:
        with self._lock:
            return list(self._records.values())

    def put(self, record: FitnessRecord):
        with self._lock:
            self._records[record.genome] = record

    def get_or_evaluate(self, genome: Genome,
                        evaluate: Callable[[Genome], FitnessRecord]) -> Tuple[FitnessRecord, bool]:
        """Returns (record, was_cached)."""
        with self._lock:
            record = self._records.get(genome)
            if record is not None:
                self.hits += 1
                return record, True
            future = self._pending.get(genome)
            owner = future is None
            if owner:
                future = Future()
                self._pending[genome] = future
        if not owner:
            return future.result(), True

        try:
            record = evaluate(genome)
        except BaseException as e:
            with self._lock:
                self._pending.pop(genome, None)
            future.set_exception(e)
            raise
        with self._lock:
            self._records[genome] = record
            self._pending.pop(genome, None)
        future.set_result(record)
        return record, False


@dataclass
class SearchState:
    population: Population
    rng: "CountingGenerator"
    rng_seed: int
    generation: int = 0
    stage: int = 0
    stagnation: int = 0
    cache: FitnessCache = field(default_factory=FitnessCache)
    cost: SearchCost = field(default_factory=SearchCost)

    @property
    def rng_draw_count(self) -> int:
        """Random values drawn since the generator was seeded."""
        return self.rng.draws


@dataclass
class StepOutcome:
    child: Individual
    event: str
    method: str
    cached: bool


@dataclass
class SearchResult:
    population: Population
    history: List[Dict[str, Any]]
    cost: SearchCost
    stop_reason: str
    state: SearchState


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def select_elitism(population: Population) -> Tuple[Individual, Individual]:
    return population[0], population[1]


def select_tournament(population: Population, rng: np.random.Generator) -> Tuple[Individual, Individual]:
    """A uniform member, then a uniform member ranked below it."""
    size = len(population)
    i = int(rng.integers(size))
    # the last member has nobody ranked below it
    while i == size - 1:
        i = int(rng.integers(size))
    j = int(rng.integers(i + 1, size))
    return population[i], population[j]


def select_proportionate(population: Population, rng: np.random.Generator) -> Tuple[Individual, Individual]:
    """Two independent fitness-proportional draws; the same member may come back twice."""
    fitness = np.clip(population.fitnesses(), 0.0, None)
    total = fitness.sum()
    probs = fitness / total if total > 0 else np.full(len(population), 1.0 / len(population))
    cumulative = np.cumsum(probs)
    picks = np.searchsorted(cumulative, rng.random(2), side="right")
    picks = np.minimum(picks, len(population) - 1)
    return population[int(picks[0])], population[int(picks[1])]


def select_parents(population: Population, rng: np.random.Generator) -> Tuple[Individual, Individual, str]:
    """Draw one of the three selection schemes uniformly and apply it."""
    method = SELECTION_METHODS[int(rng.integers(len(SELECTION_METHODS)))]
    if method == "elitism":
        p1, p2 = select_elitism(population)
    elif method == "tournament":
        p1, p2 = select_tournament(population, rng)
    else:
        p1, p2 = select_proportionate(population, rng)
    return p1, p2, method


def splice(p1: Genome, p2: Genome, point: int, p1_left: bool) -> Genome:
    """Single-point splice: p1[:point] + p2[point:] when ``p1_left``, else p2[:point] + p1[point:]."""
    left, right = (p1, p2) if p1_left else (p2, p1)
    return Genome.from_genes(left.genes[:point] + right.genes[point:])


def crossover(p1: Genome, p2: Genome, rng: np.random.Generator) -> Genome:
    point = int(rng.integers(0, GENOME_LENGTH))
    p1_left = bool(rng.integers(2))
    return splice(p1, p2, point, p1_left)


def replace_gene(genome: Genome, position: int, value: int) -> Genome:
    genes = list(genome.genes)
    genes[position] = value
    return Genome.from_genes(genes)


def mutate(genome: Genome, rng: np.random.Generator) -> Genome:
    """Redraw one gene uniformly from its own domain (may coincide with the old value)."""
    position = int(rng.integers(0, GENOME_LENGTH))
    return replace_gene(genome, position, int(rng.integers(0, gene_domain(position))))


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class CountingGenerator:
    """A numpy Generator that counts the random values it has produced."""

    def __init__(self, generator: np.random.Generator, draws: int = 0):
        self.generator = generator
        self.draws = draws

    @property
    def bit_generator(self):
        return self.generator.bit_generator

    def __getattr__(self, name: str):
        method = getattr(self.generator, name)
        if not callable(method):
            return method

        def counted(*args, **kwargs):
            out = method(*args, **kwargs)
            self.draws += int(np.size(out))
            return out
        return counted


def _rng_state_to_json(rng: "CountingGenerator") -> Dict[str, Any]:
    state = rng.bit_generator.state
    # 128-bit integers do not survive every JSON encoder
    return {
        "bit_generator": state["bit_generator"],
        "state": {k: str(v) for k, v in state["state"].items()},
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _rng_from_json(data: Dict[str, Any], draws: int = 0) -> "CountingGenerator":
    rng = np.random.default_rng()
    rng.bit_generator.state = {
        "bit_generator": data["bit_generator"],
        "state": {k: int(v) for k, v in data["state"].items()},
        "has_uint32": data["has_uint32"],
        "uinteger": data["uinteger"],
    }
    return CountingGenerator(rng, draws)


class GeneticSearch:
    """
    Runs the steady-state search for one configuration.

    Args:
        config: Search settings (population size, schedule, limits)
        fitness_fn: ``(genome, threshold) -> FitnessRecord``
        seed: Seed of the run's random generator
        epoch_budget: Full training budget, for cost accounting
        checkpoint_dir: Directory for periodic checkpoints, or None
        history_path: JSON-lines file receiving one entry per generation, or None
        run_config: Full run configuration echoed into every checkpoint, or None
    """

    def __init__(self, config: SearchConfig, fitness_fn: FitnessFn, seed: int = 0,
                 epoch_budget: int = 15, checkpoint_dir: Optional[Path] = None,
                 history_path: Optional[Path] = None, run_config: Optional[Dict[str, Any]] = None):
        self.config = config
        self.fitness_fn = fitness_fn
        self.seed = seed
        self.epoch_budget = epoch_budget
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.history_writer = JsonlWriter(Path(history_path)) if history_path else None
        self.milestones = config.resolved_milestones()
        self.events = EnhancedLogger("binsim.search")
        self.run_config = run_config
        self.history: List[Dict[str, Any]] = []
        # history entries written by an earlier process and not held in memory
        self.history_offset = 0
        self.state: Optional[SearchState] = None

    # -- thresholds ---------------------------------------------------------

    def stage_for(self, generation: int) -> int:
        return bisect.bisect_right(self.milestones, generation) - 1

    def threshold(self, stage: int) -> float:
        return threshold_for(stage, self.config.thresholds, self.config.chance_ratio)

    # -- evaluation ---------------------------------------------------------

    def _evaluate_safely(self, genome: Genome, threshold: float) -> FitnessRecord:
        start = time.perf_counter()
        try:
            record = self.fitness_fn(genome, threshold)
            if not np.isfinite(record.fitness):
                raise ValueError(f"non-finite fitness {record.fitness}")
        except Exception as e:
            logger.error(f"Fitness evaluation of {genome} failed: {e}", exc_info=True)
            self.events.log_error_with_context(e, {"genome": serialize_genome(genome)}, ErrorCategory.EVALUATION)
            record = FitnessRecord.failure(genome, threshold, f"{type(e).__name__}: {e}")
            record.wall_time = time.perf_counter() - start
        if record.diverged:
            self.events.warning(f"Measure {genome} diverged", error_category=ErrorCategory.NUMERICAL)
        return record

    def _fitness(self, state: SearchState, genome: Genome, threshold: float) -> Tuple[FitnessRecord, bool]:
        record, cached = state.cache.get_or_evaluate(genome, lambda g: self._evaluate_safely(g, threshold))
        if cached:
            record_cache_hit(state.cost, self.epoch_budget)
        else:
            record_evaluation(state.cost, record, self.epoch_budget)
        return record, cached

    # -- initialization -----------------------------------------------------

    def initialize(self) -> SearchState:
        """S-1 random genomes with fitness above the stage-0 bar, plus the baseline."""
        size = self.config.population_size
        threshold = self.threshold(0)
        rng = CountingGenerator(np.random.default_rng(self.seed))
        state = SearchState(population=Population(), rng=rng, rng_seed=self.seed)

        accepted: List[Individual] = []
        seen = {BASELINE_GENOME}
        draws = 0
        executor = ThreadPoolExecutor(max_workers=self.config.workers) if self.config.workers > 1 else None
        try:
            while len(accepted) < size - 1:
                batch: List[Genome] = []
                while len(batch) < size - 1 - len(accepted):
                    if draws >= self.config.init_draw_budget:
                        break
                    candidate = random_genome(rng)
                    draws += 1
                    if candidate in seen:
                        continue
                    seen.add(candidate)
                    batch.append(candidate)
                if not batch:
                    raise InitializationError(
                        f"draw budget of {self.config.init_draw_budget} exhausted with "
                        f"{len(accepted)}/{size - 1} individuals above threshold {threshold:.3f}",
                        threshold,
                    )
                if executor is not None:
                    results = list(executor.map(lambda g: self._fitness(state, g, threshold), batch))
                else:
                    results = [self._fitness(state, g, threshold) for g in batch]
                for record, _ in results:
                    if record.fitness > threshold and len(accepted) < size - 1:
                        accepted.append(Individual.from_record(record))
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

        baseline, _ = self._fitness(state, BASELINE_GENOME, threshold)
        accepted.append(Individual.from_record(baseline))
        state.population = Population(accepted)
        self.state = state
        logger.info(f"Initialized population of {size} after {draws} draws "
                     f"(threshold {threshold:.3f}, best {state.population.best.fitness:.4f})")
        self._record_history(state, "init")
        return state

    # -- generations --------------------------------------------------------

    def step(self, state: SearchState) -> StepOutcome:
        """Produce one offspring and apply insert-if-better replacement."""
        stage = self.stage_for(state.generation)
        if stage != state.stage:
            state.stage = stage
            self.events.info(f"Threshold stage {stage}: {self.threshold(stage):.3f}", generation=state.generation)
        threshold = self.threshold(state.stage)

        p1, p2, method = select_parents(state.population, state.rng)
        child_genome = mutate(crossover(p1.genome, p2.genome, state.rng), state.rng)
        record, cached = self._fitness(state, child_genome, threshold)
        child = Individual.from_record(record)

        if state.population.contains(child_genome):
            event = "duplicate"
        elif child.fitness > state.population.weakest.fitness:
            state.population.replace_weakest(child)
            event = "inserted"
        else:
            event = "discarded"
        state.stagnation = 0 if event == "inserted" else state.stagnation + 1
        state.generation += 1
        return StepOutcome(child=child, event=event, method=method, cached=cached)

    def _record_history(self, state: SearchState, event: str):
        entry = {"gen": state.generation, "best": state.population.best.fitness,
                 "median": state.population.median(), "event": event}
        self.history.append(entry)
        if self.history_writer is not None:
            self.history_writer.append(entry)

    def _stop_reason(self, state: SearchState) -> Optional[str]:
        stop_fitness = self.config.stop_fitness
        if stop_fitness is not None and state.population.best.fitness >= stop_fitness:
            return "stop_fitness"
        if state.generation >= self.config.max_generations:
            return "max_generations"
        if state.stagnation >= self.config.stagnation_window:
            return "converged"
        return None

    def run(self, state: Optional[SearchState] = None) -> SearchResult:
        """Loop until convergence, the generation limit or the stop fitness."""
        state = state or self.state or self.initialize()
        self.state = state
        every = self.config.checkpoint_every
        reason = self._stop_reason(state)
        while reason is None:
            outcome = self.step(state)
            self._record_history(state, outcome.event)
            logger.debug(f"gen {state.generation}: {outcome.method} -> {outcome.child.genome} "
                         f"fitness={outcome.child.fitness:.4f} {outcome.event}")
            if self.checkpoint_dir is not None and every and state.generation % every == 0:
                self.checkpoint(state)
            reason = self._stop_reason(state)

        if self.checkpoint_dir is not None:
            self.checkpoint(state)
        logger.info(f"Search stopped ({reason}) at generation {state.generation}; "
                    f"best {state.population.best.genome} fitness={state.population.best.fitness:.4f}")
        return SearchResult(state.population, self.history, state.cost, reason, state)

    # -- checkpoints --------------------------------------------------------

    def checkpoint_payload(self, state: SearchState) -> Dict[str, Any]:
        return {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "timestamp": get_timestamp(),
            "config": self.config.model_dump(mode="json"),
            "generation": state.generation,
            "stage": state.stage,
            "stagnation": state.stagnation,
            "rng_seed": state.rng_seed,
            "rng_draw_count": state.rng_draw_count,
            "rng_state": _rng_state_to_json(state.rng),
            "population": [m.to_dict() for m in state.population],
            "cache": [r.to_dict() for r in state.cache.records()],
            "cache_hits": state.cache.hits,
            "cost": state.cost.to_dict(),
            "history_length": self.history_offset + len(self.history),
            **({"run_config": self.run_config} if self.run_config is not None else {}),
        }

    def checkpoint(self, state: SearchState) -> Path:
        path = self.checkpoint_dir / f"checkpoint_{state.generation:06d}.json"
        try:
            write_json_atomic(path, self.checkpoint_payload(state))
        except OSError as e:
            self.events.error(f"Checkpoint write to {path} failed: {e}", error_category=ErrorCategory.IO)
            raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
        logger.debug(f"Checkpoint written to {path}")
        return path

    def restore(self, payload: Dict[str, Any]) -> SearchState:
        """Rebuild the state saved by ``checkpoint_payload``."""
        if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise CheckpointError(f"unsupported checkpoint schema {payload.get('schema_version')!r}")
        try:
            cache = FitnessCache()
            for data in payload["cache"]:
                cache.put(FitnessRecord.from_dict(data))
            cache.hits = int(payload.get("cache_hits", 0))
            state = SearchState(
                population=Population([Individual.from_dict(m) for m in payload["population"]]),
                rng=_rng_from_json(payload["rng_state"], int(payload["rng_draw_count"])),
                rng_seed=int(payload["rng_seed"]),
                generation=int(payload["generation"]),
                stage=int(payload["stage"]),
                stagnation=int(payload["stagnation"]),
                cache=cache,
                cost=SearchCost(**payload["cost"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed checkpoint: {e}") from e
        self.seed = state.rng_seed
        self.state = state
        return state

    @classmethod
    def resume(cls, checkpoint_path: Path, fitness_fn: FitnessFn, epoch_budget: int = 15,
               checkpoint_dir: Optional[Path] = None, history_path: Optional[Path] = None) -> "GeneticSearch":
        """Search object positioned at the state stored in ``checkpoint_path``.

        An existing ``history_path`` is cut back to the entries the
        checkpoint had seen, so replayed generations are not logged twice.
        """
        payload = read_checkpoint(checkpoint_path)
        try:
            config = SearchConfig(**payload["config"])
            seed = int(payload["rng_seed"])
            history_length = int(payload.get("history_length", 0))
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed checkpoint: {e}") from e
        search = cls(config, fitness_fn, seed, epoch_budget, checkpoint_dir, history_path,
                     run_config=payload.get("run_config"))
        search.restore(payload)
        if search.history_writer is not None and search.history_writer.path.exists():
            search.history = search.history_writer.truncate(history_length)
        search.history_offset = history_length - len(search.history)
        logger.info(f"Resumed search at generation {search.state.generation} from {checkpoint_path}")
        return search


def read_checkpoint(path: Path) -> Dict[str, Any]:
    """Parsed checkpoint file; unreadable or non-object files raise CheckpointError."""
    try:
        payload = read_json(Path(path))
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict):
        raise CheckpointError(f"checkpoint {path} is not a JSON object")
    return payload


# ---------------------------------------------------------------------------
# Functional entry points
# ---------------------------------------------------------------------------

def init_population(size: int, threshold: float, fitness_fn: FitnessFn, seed: int = 0,
                    draw_budget: int = 1000, workers: int = 1) -> Population:
    config = SearchConfig(population_size=size, thresholds=[threshold], init_draw_budget=draw_budget,
                          workers=workers, max_generations=0)
    return GeneticSearch(config, fitness_fn, seed).initialize().population


def step(state: SearchState, fitness_fn: FitnessFn, config: Optional[SearchConfig] = None) -> StepOutcome:
    search = GeneticSearch(config or SearchConfig(population_size=len(state.population)), fitness_fn,
                           state.rng_seed)
    return search.step(state)


def run(config: SearchConfig, fitness_fn: FitnessFn, seed: int = 0, epoch_budget: int = 15,
        checkpoint_dir: Optional[Path] = None, history_path: Optional[Path] = None) -> SearchResult:
    return GeneticSearch(config, fitness_fn, seed, epoch_budget, checkpoint_dir, history_path).run()


def population_table(population: Population) -> List[Dict[str, Any]]:
    """Rows of rank, genome, formula, fitness, rejected flag and epochs."""
    return [
        {
            "rank": rank,
            "genome": serialize_genome(m.genome),
            "formula": decode(m.genome).formula(),
            "fitness": m.fitness,
            "rejected": m.rejected,
            "epochs": m.epochs,
        }
        for rank, m in enumerate(population, start=1)
    ]
