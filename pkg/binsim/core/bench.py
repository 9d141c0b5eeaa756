"""
Kernel throughput benchmark.

Every size is first checked against the bit-loop oracle; a kernel that
disagrees is never timed.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from .bitpack import BitVector, QuadCounts, match_counts, match_counts_matrix, oracle_match_counts, xnor_dot

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (64, 512, 4096)
MATRIX_ROWS = 32

MatchFn = Callable[[BitVector, BitVector], QuadCounts]
DotFn = Callable[[BitVector, BitVector], int]


class EquivalenceError(RuntimeError):
    """Raised when a kernel disagrees with the oracle."""
    pass


@dataclass
class BenchResult:
    n: int
    pairs: int
    checked: int
    match_counts_per_sec: float
    xnor_dot_per_sec: float
    matrix_counts_per_sec: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _random_pairs(n: int, count: int, rng: np.random.Generator):
    bits = rng.integers(0, 2, size=(count, 2, n), dtype=np.uint8)
    return [(BitVector.from_bits(b[0]), BitVector.from_bits(b[1])) for b in bits]


def verify_kernels(n: int, rng: np.random.Generator, checks: int = 100,
                   match_fn: MatchFn = match_counts, dot_fn: DotFn = xnor_dot) -> int:
    """Compare both kernels with the oracle on ``checks`` random pairs of length n."""
    for x, y in _random_pairs(n, checks, rng):
        expected = oracle_match_counts(x.to_bits(), y.to_bits())
        got = match_fn(x, y)
        if got != expected:
            raise EquivalenceError(f"match_counts mismatch at n={n}: {got} != {expected}")
        if got.n != n:
            raise EquivalenceError(f"match_counts at n={n} sums to {got.n}")
        dot = dot_fn(x, y)
        if dot != expected.dot:
            raise EquivalenceError(f"xnor_dot mismatch at n={n}: {dot} != {expected.dot}")
    return checks


def verify_matrix(n: int, pairs) -> Tuple[np.ndarray, np.ndarray]:
    """Check the batched kernel's diagonal against the oracle; returns the stacked rows."""
    xs = np.stack([x.words for x, _ in pairs]).reshape(len(pairs), -1)
    ws = np.stack([y.words for _, y in pairs]).reshape(len(pairs), -1)
    counts = match_counts_matrix(xs, ws, n)
    for i, (x, y) in enumerate(pairs):
        expected = oracle_match_counts(x.to_bits(), y.to_bits())
        got = QuadCounts(*(int(c[i, i]) for c in counts))
        if got != expected:
            raise EquivalenceError(f"match_counts_matrix mismatch at n={n}: {got} != {expected}")
    return xs, ws


def _matrix_throughput(xs: np.ndarray, ws: np.ndarray, n: int, min_time: float) -> float:
    cells = 0
    start = time.perf_counter()
    elapsed = 0.0
    while elapsed < min_time or cells == 0:
        match_counts_matrix(xs, ws, n)
        cells += xs.shape[0] * ws.shape[0]
        elapsed = time.perf_counter() - start
    return cells / elapsed


def _throughput(fn: Callable, pairs, min_time: float) -> float:
    calls = 0
    start = time.perf_counter()
    elapsed = 0.0
    while elapsed < min_time or calls == 0:
        for x, y in pairs:
            fn(x, y)
        calls += len(pairs)
        elapsed = time.perf_counter() - start
    return calls / elapsed


def run_bench(sizes: Sequence[int] = DEFAULT_SIZES, pairs: int = 1000, checks: int = 100,
              seed: int = 0, min_time: float = 0.2,
              match_fn: MatchFn = match_counts, dot_fn: DotFn = xnor_dot) -> List[BenchResult]:
    rng = np.random.default_rng(seed)
    results = []
    for n in sizes:
        checked = verify_kernels(n, rng, checks, match_fn, dot_fn)
        sample = _random_pairs(n, pairs, rng)
        xs, ws = verify_matrix(n, sample[:MATRIX_ROWS])
        result = BenchResult(
            n=n,
            pairs=pairs,
            checked=checked,
            match_counts_per_sec=_throughput(match_fn, sample, min_time),
            xnor_dot_per_sec=_throughput(dot_fn, sample, min_time),
            matrix_counts_per_sec=_matrix_throughput(xs, ws, n, min_time),
        )
        logger.info(f"n={n}: match_counts {result.match_counts_per_sec:,.0f}/s, "
                    f"xnor_dot {result.xnor_dot_per_sec:,.0f}/s, "
                    f"matrix {result.matrix_counts_per_sec:,.0f} cells/s")
        results.append(result)
    return results
