"""
Utility functions and classes for binsim.
"""

from .logging import EnhancedLogger, ErrorCategory, configure_logging, get_timestamp

__all__ = [
    "EnhancedLogger",
    "ErrorCategory",
    "configure_logging",
    "get_timestamp",
]
