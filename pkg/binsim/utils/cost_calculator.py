"""
Compute-cost accounting for a search run.

The cost of a search is measured in training epochs. Early rejection
saves (budget - epochs_run) epochs per rejected candidate; cache hits
save a full evaluation.
"""

import threading
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Iterable, Optional
import logging

logger = logging.getLogger(__name__)


@dataclass
class SearchCost:
    evaluations: int = 0
    rejections: int = 0
    divergences: int = 0
    failures: int = 0
    cache_hits: int = 0
    epochs_trained: int = 0
    epochs_saved: int = 0
    wall_time: float = 0.0
    # parallel evaluations update the counters from worker threads
    lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        with self.lock:
            return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


def calculate_epochs_saved(epochs_run: int, epoch_budget: int) -> int:
    """Epochs not trained because the candidate stopped early."""
    return max(epoch_budget - epochs_run, 0)


def record_evaluation(cost: SearchCost, record: Any, epoch_budget: int):
    """Add one fresh fitness evaluation to ``cost``."""
    epochs_run = int(getattr(record, "epochs_run", 0))
    epochs_trained = int(getattr(record, "epochs_trained", epochs_run))
    with cost.lock:
        cost.evaluations += 1
        cost.epochs_trained += epochs_trained
        cost.wall_time += float(getattr(record, "wall_time", 0.0))
        if getattr(record, "error", None):
            cost.failures += 1
        elif getattr(record, "diverged", False):
            cost.divergences += 1
        elif getattr(record, "rejected", False):
            cost.rejections += 1
            cost.epochs_saved += calculate_epochs_saved(epochs_run, epoch_budget)


def record_cache_hit(cost: SearchCost, epoch_budget: int):
    with cost.lock:
        cost.cache_hits += 1
        cost.epochs_saved += epoch_budget


def calculate_search_cost(records: Iterable[Any], epoch_budget: int, cache_hits: int = 0) -> SearchCost:
    """Aggregate a full ledger of evaluation records."""
    cost = SearchCost()
    for record in records:
        record_evaluation(cost, record, epoch_budget)
    for _ in range(cache_hits):
        record_cache_hit(cost, epoch_budget)
    return cost


def format_cost_summary(cost: SearchCost, breakdown: Optional[Dict[str, float]] = None) -> str:
    """Format cost information for display."""
    total = cost.epochs_trained + cost.epochs_saved
    share = (cost.epochs_saved / total) if total else 0.0
    summary = (f"{cost.evaluations} evaluations, {cost.epochs_trained} epochs trained, "
               f"{cost.epochs_saved} saved ({share:.0%})")
    if breakdown:
        details = [f"{k}: {v:.2f}" for k, v in breakdown.items() if v > 0]
        if details:
            summary += f" ({', '.join(details)})"
    return summary
