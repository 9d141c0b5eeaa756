"""
Optional imports utility for handling missing dependencies gracefully.

orjson is used for JSON-lines ledgers and checkpoints when installed;
the standard json module is the fallback.
"""

import logging
from typing import Any

logger = logging.getLogger(__name__)

# Enhanced JSON processing
try:
    import orjson
    ORJSON_AVAILABLE = True
except ImportError:
    orjson = None
    ORJSON_AVAILABLE = False
    logger.debug("orjson not available - using standard json module")


def safe_json_dumps(data: Any, sort_keys: bool = False, indent: bool = False) -> str:
    """Serialize JSON using orjson if available, otherwise standard json."""
    if ORJSON_AVAILABLE:
        option = orjson.OPT_SERIALIZE_NUMPY
        if sort_keys:
            option |= orjson.OPT_SORT_KEYS
        if indent:
            option |= orjson.OPT_INDENT_2
        # orjson returns bytes
        return orjson.dumps(data, option=option).decode('utf-8')
    else:
        import json
        return json.dumps(
            data,
            sort_keys=sort_keys,
            indent=2 if indent else None,
            separators=None if indent else (",", ":"),
        )


def safe_json_loads(data: str) -> Any:
    """Deserialize JSON using orjson if available, otherwise standard json."""
    if ORJSON_AVAILABLE:
        return orjson.loads(data)
    else:
        import json
        return json.loads(data)


def check_optional_dependencies() -> dict:
    """Check which optional dependencies are available."""
    return {"orjson": ORJSON_AVAILABLE}
