"""
Dataset loading, saving and synthesis.
"""

from .dataset import (
    Dataset,
    DatasetFormatError,
    from_arrays,
    from_bytes,
    load,
    save,
    split,
    synthesize,
    to_bytes,
)

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "from_arrays",
    "from_bytes",
    "load",
    "save",
    "split",
    "synthesize",
    "to_bytes",
]
