"""
Tests for the binsim command-line interface.
"""

import json
import pytest
import sys
from pathlib import Path

from click.testing import CliRunner

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import binsim.cli as cli_module
from binsim.cli import cli, main
from binsim.core.bitpack import QuadCounts


def _json_lines(output):
    return [json.loads(line) for line in output.splitlines() if line.startswith("{")]


@pytest.fixture(autouse=True)
def quiet_logs(monkeypatch):
    monkeypatch.setenv("BINSIM_LOG", "error")


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "seed": 1,
        "output_dir": str(tmp_path / "runs"),
        "dataset": {"samples": 60, "classes": 3, "height": 4, "width": 4},
        "train": {"epochs": 1, "batch_size": 16},
        "search": {"population_size": 8, "max_generations": 30, "stagnation_window": 30,
                   "checkpoint_every": 10},
    }))
    return path


class TestDecode:
    """binsim decode"""

    def test_baseline_formula_first_line(self, runner):
        result = runner.invoke(cli, ["decode", "0000001"])
        assert result.exit_code == 0
        assert result.output.splitlines()[0] == "(a + d) - (b + c)"

    def test_json_output(self, runner):
        result = runner.invoke(cli, ["decode", "3,0,3,0,0,1,6", "--json"])
        assert result.exit_code == 0
        row = _json_lines(result.output)[0]
        assert row["formula"] == "(b^3 - c) / (a^3 + d)"
        assert row["slots"]["B3"] == "y/x"

    def test_all_builtins(self, runner):
        result = runner.invoke(cli, ["decode", "--all-builtins", "--json"])
        assert result.exit_code == 0
        names = [row["name"] for row in _json_lines(result.output)]
        assert names[0] == "baseline"
        assert "M10" in names

    def test_invalid_genome(self, runner):
        result = runner.invoke(cli, ["decode", "0,0,0,0,14,0,0"])
        assert result.exit_code == 1
        assert "gene 4" in result.output

    def test_missing_argument(self, runner):
        result = runner.invoke(cli, ["decode"])
        assert result.exit_code == 1


class TestEval:
    """binsim eval"""

    def test_unknown_measure(self, runner):
        result = runner.invoke(cli, ["eval", "--measure", "M99"])
        assert result.exit_code == 1
        assert "unknown measure" in result.output

    def test_compares_with_baseline(self, runner, small_config):
        result = runner.invoke(cli, ["eval", "--measure", "M1", "--config", str(small_config), "--json"])
        assert result.exit_code == 0, result.output
        row = _json_lines(result.output)[0]
        assert row["genome"] == "3,0,3,0,0,1,6"
        assert 0.0 <= row["accuracy"] <= 1.0
        assert row["delta"] == pytest.approx(row["accuracy"] - row["baseline_accuracy"])
        assert len(row["config_hash"]) == 12

    def test_unknown_config_key(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"train": {"epochz": 3}}))
        result = runner.invoke(cli, ["eval", "--measure", "baseline", "--config", str(path)])
        assert result.exit_code == 1
        assert "train.epochz" in result.output

    def test_missing_dataset_file(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dataset": {"path": str(tmp_path / "nope.bnnd")}}))
        result = runner.invoke(cli, ["eval", "--measure", "baseline", "--config", str(path)])
        assert result.exit_code == 1
        assert "dataset.path" in result.output

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["eval", "--measure", "baseline", "--config", str(tmp_path / "none.json")])
        assert result.exit_code == 1


class TestSearch:
    """binsim search with the surrogate fitness."""

    def test_writes_results(self, runner, small_config, tmp_path):
        result = runner.invoke(cli, ["search", "--config", str(small_config),
                                     "--surrogate-target", "3,0,3,0,0,1,6", "--json"])
        assert result.exit_code == 0, result.output
        rows = _json_lines(result.output)
        assert len(rows) == 8
        assert [r["rank"] for r in rows] == list(range(1, 9))
        assert len({r["config_hash"] for r in rows}) == 1

        run_dirs = list((tmp_path / "runs").iterdir())
        assert len(run_dirs) == 1
        run_dir = run_dirs[0]
        assert (run_dir / "run_config.json").exists()
        assert (run_dir / "results" / "population.jsonl").exists()
        summary = json.loads((run_dir / "results" / "summary.json").read_text())
        assert summary["best"] == rows[0]
        assert (run_dir / "logs" / "history.jsonl").exists()
        assert list((run_dir / "checkpoints").glob("checkpoint_*.json"))

    def test_resume_matches_uninterrupted_run(self, runner, small_config, tmp_path):
        args = ["search", "--config", str(small_config), "--surrogate-target", "3,0,3,0,0,1,6", "--json"]
        first = runner.invoke(cli, args)
        assert first.exit_code == 0, first.output
        run_dir = next((tmp_path / "runs").iterdir())
        checkpoint = run_dir / "checkpoints" / "checkpoint_000010.json"

        resumed = runner.invoke(cli, ["search", "--resume", str(checkpoint),
                                      "--surrogate-target", "3,0,3,0,0,1,6", "--json"])
        assert resumed.exit_code == 0, resumed.output
        assert _json_lines(resumed.output) == _json_lines(first.output)

    def test_resume_keeps_one_history_entry_per_generation(self, runner, small_config, tmp_path):
        args = ["search", "--config", str(small_config), "--surrogate-target", "3,0,3,0,0,1,6"]
        assert runner.invoke(cli, args).exit_code == 0
        run_dir = next((tmp_path / "runs").iterdir())
        history = run_dir / "logs" / "history.jsonl"
        before = [json.loads(line) for line in history.read_text().splitlines()]
        assert [row["gen"] for row in before] == list(range(31))

        resumed = runner.invoke(cli, ["search", "--resume", str(run_dir / "checkpoints" / "checkpoint_000010.json"),
                                      "--surrogate-target", "3,0,3,0,0,1,6"])
        assert resumed.exit_code == 0, resumed.output
        after = [json.loads(line) for line in history.read_text().splitlines()]
        assert after == before

    def test_resume_from_relocated_checkpoint(self, runner, small_config, tmp_path):
        args = ["search", "--config", str(small_config), "--surrogate-target", "3,0,3,0,0,1,6", "--json"]
        first = runner.invoke(cli, args)
        assert first.exit_code == 0, first.output
        run_dir = next((tmp_path / "runs").iterdir())
        moved = tmp_path / "elsewhere" / "ckpt.json"
        moved.parent.mkdir()
        moved.write_text((run_dir / "checkpoints" / "checkpoint_000010.json").read_text())

        resumed = runner.invoke(cli, ["search", "--resume", str(moved),
                                      "--surrogate-target", "3,0,3,0,0,1,6", "--json"])
        assert resumed.exit_code == 0, resumed.output
        assert _json_lines(resumed.output) == _json_lines(first.output)
        fresh = [d for d in (tmp_path / "runs").iterdir() if d.name.endswith("_resume")]
        assert len(fresh) == 1
        assert (fresh[0] / "results" / "population.jsonl").exists()
        gens = [json.loads(line)["gen"] for line in (fresh[0] / "logs" / "history.jsonl").read_text().splitlines()]
        assert gens == list(range(11, 31))

    def test_missing_checkpoint(self, runner, tmp_path):
        result = runner.invoke(cli, ["search", "--resume", str(tmp_path / "x" / "checkpoints" / "c.json"),
                                     "--surrogate-target", "0000001"])
        assert result.exit_code == 2

    def test_bad_surrogate_target(self, runner):
        result = runner.invoke(cli, ["search", "--surrogate-target", "99"])
        assert result.exit_code == 1


class TestBench:
    """binsim bench"""

    def test_small_bench(self, runner):
        result = runner.invoke(cli, ["bench", "--n", "64", "--n", "65", "--pairs", "5", "--json"])
        assert result.exit_code == 0, result.output
        rows = _json_lines(result.output)
        assert [r["n"] for r in rows] == [64, 65]
        assert all(r["match_counts_per_sec"] > 0 for r in rows)

    def test_broken_kernel_fails(self, runner, monkeypatch):
        monkeypatch.setattr(cli_module, "match_counts", lambda x, y: QuadCounts(0, 0, 0, len(x)))
        result = runner.invoke(cli, ["bench", "--n", "64", "--pairs", "5"])
        assert result.exit_code == 2
        assert "EquivalenceError" in result.output


class TestEntryPoint:
    """Console entry point."""

    def test_main_exits_with_code(self):
        with pytest.raises(SystemExit) as exc:
            main(["decode", "0000001"])
        assert exc.value.code == 0

    def test_main_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 1


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
