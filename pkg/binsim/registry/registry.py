import json
import logging
import os
from typing import Any, Dict, List, Optional

from ..core.measure import Genome, InvalidGenomeError, MeasureExpr, decode

logger = logging.getLogger(__name__)

BUILTINS_FILE = "builtins.json"  # Ships as package data next to this module


class UnknownMeasureError(KeyError):
    """Raised when a measure name is not registered."""
    pass


class MeasureRegistry:
    """
    Named similarity measures backed by JSON files.

    The built-in set (the XNOR baseline and M1..M10) is read from the
    package's builtins.json. An optional user file adds or overrides
    entries and is the only file ``save`` ever writes.

    Attributes:
        filepath: Path to the user registry file, or None
        measures: name -> {"genome": [7 ints], "description": str}
    """

    def __init__(self, filepath: Optional[str] = None):
        self.filepath = filepath
        self.measures: Dict[str, Dict[str, Any]] = {}
        self._user: Dict[str, Dict[str, Any]] = {}
        self.load()

    def load(self):
        """Loads the built-ins, then the user file when one exists."""
        builtins_path = os.path.join(os.path.dirname(__file__), BUILTINS_FILE)
        with open(builtins_path, "r") as f:
            self.measures = dict(json.load(f).get("measures", {}))

        self._user = {}
        if self.filepath and os.path.exists(self.filepath):
            try:
                with open(self.filepath, "r") as f:
                    self._user = dict(json.load(f).get("measures", {}))
                logger.info(f"Measure registry loaded from {self.filepath}")
            except (OSError, json.JSONDecodeError) as e:
                logger.error(f"Error loading measure registry from {self.filepath}: {e}")
                self._user = {}
        self.measures.update(self._user)

    def save(self):
        """Saves user-added measures to ``filepath``."""
        if not self.filepath:
            logger.warning("Measure registry has no user file; nothing saved")
            return
        with open(self.filepath, "w") as f:
            json.dump({"measures": self._user}, f, indent=2)
        logger.info(f"Measure registry saved to {self.filepath}")

    def add_measure(self, name: str, genome: Genome, description: str = "", persist: bool = True):
        """Adds or replaces a named measure."""
        if not name:
            raise ValueError("measure name is required")
        entry = {"genome": list(genome.genes), "description": description}
        self.measures[name] = entry
        self._user[name] = entry
        logger.info(f"Measure '{name}' registered as {genome}")
        if persist and self.filepath:
            self.save()

    def genome(self, name: str) -> Genome:
        entry = self.measures.get(name)
        if entry is None:
            raise UnknownMeasureError(name)
        try:
            return Genome.from_genes(entry["genome"])
        except (KeyError, TypeError) as e:
            raise InvalidGenomeError(f"registry entry '{name}' is malformed: {e}") from e

    def get(self, name: str) -> MeasureExpr:
        return decode(self.genome(name))

    def describe(self, name: str) -> str:
        if name not in self.measures:
            raise UnknownMeasureError(name)
        return self.measures[name].get("description", "")

    def list_names(self) -> List[str]:
        return list(self.measures.keys())

    def __contains__(self, name: str) -> bool:
        return name in self.measures


_default_registry: Optional[MeasureRegistry] = None


def default_registry() -> MeasureRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = MeasureRegistry()
    return _default_registry


def builtin(name: str) -> MeasureExpr:
    """Decoded built-in measure ("baseline", "M1".."M10")."""
    return default_registry().get(name)
