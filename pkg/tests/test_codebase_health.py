"""
Codebase health checks for binsim.

This test suite validates:
- Import integrity
- Exception hierarchy used by the CLI exit codes
- Optional dependencies
- Package data
"""

import pytest
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


class TestImports:
    """Test that all modules can be imported without errors."""

    def test_core_imports(self):
        import binsim
        from binsim.core import BitVector, Genome, match_counts, decode
        from binsim.core.search import GeneticSearch
        from binsim.core.fitness import FitnessEvaluator, SurrogateFitness
        from binsim.core.bench import run_bench

    def test_nn_imports(self):
        from binsim.nn import Trainer, build_model, save_model
        from binsim.data import synthesize, load

    def test_utility_imports(self):
        from binsim.utils.logging import EnhancedLogger, configure_logging
        from binsim.utils.cost_calculator import calculate_search_cost
        from binsim.utils.schema_validator import RunConfig, load_run_config
        from binsim.utils.optional_imports import check_optional_dependencies


class TestErrorHierarchy:
    """Exceptions map onto the right CLI exit codes."""

    def test_usage_errors_are_value_or_key_errors(self):
        from binsim.core.measure import GenomeParseError, InvalidGenomeError
        from binsim.registry import UnknownMeasureError
        from binsim.utils.schema_validator import ConfigError

        assert issubclass(GenomeParseError, InvalidGenomeError)
        assert issubclass(InvalidGenomeError, ValueError)
        assert issubclass(UnknownMeasureError, KeyError)
        assert issubclass(ConfigError, ValueError)

    def test_cli_classifies_every_error(self):
        from binsim.cli import RUNTIME_ERRORS, USAGE_ERRORS
        from binsim.core.bench import EquivalenceError
        from binsim.core.search import CheckpointError, InitializationError
        from binsim.core.measure import InvalidGenomeError

        assert InvalidGenomeError in USAGE_ERRORS
        for error in (CheckpointError, InitializationError, EquivalenceError):
            assert error in RUNTIME_ERRORS

    def test_errors_carry_locations(self):
        from binsim.core.measure import GenomeParseError
        from binsim.data.dataset import DatasetFormatError
        from binsim.nn.checkpoint import ModelFormatError
        from binsim.nn.trainer import TrainingDivergedError

        assert GenomeParseError("bad", 3).position == 3
        assert DatasetFormatError("bad", 12).offset == 12
        assert ModelFormatError("bad", 4).offset == 4
        assert TrainingDivergedError(2, float("inf")).epoch == 2


class TestOptionalDependencies:
    """Test optional dependency handling."""

    def test_dependency_check(self):
        from binsim.utils.optional_imports import check_optional_dependencies

        deps = check_optional_dependencies()
        assert isinstance(deps, dict)
        assert isinstance(deps["orjson"], bool)


def test_package_structure():
    """Test that package structure is correct."""
    import binsim

    assert binsim.__version__ == "1.0.0"
    from binsim import core, data, nn, registry, utils

    builtins_file = Path(registry.__file__).parent / "builtins.json"
    assert builtins_file.exists()


def test_cli_imports():
    """Test that CLI can be imported without errors."""
    try:
        from binsim.cli import main
        assert callable(main)
    except ImportError as e:
        pytest.fail(f"CLI import failed: {e}")


if __name__ == "__main__":
    # Run tests if executed directly
    pytest.main([__file__, "-v"])
