"""
binsim - genetic search for similarity measures in binarized neural networks

Searches the space of measures built from the four match frequencies
(a, b, c, d) of two binary vectors, scoring each candidate by the
validation accuracy of a small binarized network that uses it in place
of the XNOR-popcount dot product.
"""

__version__ = "1.0.0"
__author__ = "binsim developers"

from .core.measure import Genome, decode
from .cli import main as cli_main

__all__ = [
    "Genome",
    "decode",
    "cli_main"
]
