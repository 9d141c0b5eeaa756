"""
Named measure registry.

Ships the XNOR baseline and the discovered M1..M10 measures.
"""

from .registry import MeasureRegistry, UnknownMeasureError, builtin, default_registry

__all__ = [
    "MeasureRegistry",
    "UnknownMeasureError",
    "builtin",
    "default_registry",
]
