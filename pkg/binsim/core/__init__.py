"""
Core components: bit-packed match-count kernels and the measure DSL.

The search, fitness and benchmark modules are imported from their own
submodules (``binsim.core.search`` and friends).
"""

from .bitpack import BitVector, QuadCounts, match_counts, pack_signs, xnor_dot
from .measure import Genome, MeasureExpr, decode, parse_genome, serialize_genome

__all__ = [
    "BitVector",
    "QuadCounts",
    "match_counts",
    "pack_signs",
    "xnor_dot",
    "Genome",
    "MeasureExpr",
    "decode",
    "parse_genome",
    "serialize_genome",
]
