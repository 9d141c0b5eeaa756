#!/usr/bin/env python3
"""
binsim command-line interface.

    binsim search  --config run.json [--surrogate-target GENOME] [--resume CKPT]
    binsim eval    --measure NAME|GENOME [--config run.json]
    binsim decode  GENOME | --all-builtins
    binsim bench   [--n BITS ...]

Exit codes: 0 success, 1 usage/config/parse errors, 2 runtime failures.
"""

import logging
import os
import re
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from .core.bench import DEFAULT_SIZES, EquivalenceError, run_bench
from .core.bitpack import match_counts, xnor_dot
from .core.fitness import FitnessEvaluator, SurrogateFitness, chance_ratio_for, evaluate
from .core.measure import BASELINE_GENOME, Genome, InvalidGenomeError, decode, parse_genome, serialize_genome
from .core.search import CheckpointError, GeneticSearch, InitializationError, population_table, read_checkpoint
from .core.workspace_manager import RUN_CONFIG_FILE, WorkspaceConfig, WorkspaceManager, read_json, write_json_atomic
from .data.dataset import Dataset, DatasetFormatError, load, split, synthesize
from .nn.checkpoint import ModelFormatError
from .registry.registry import UnknownMeasureError, default_registry
from .utils.logging import configure_logging, resolve_log_level
from .utils.optional_imports import safe_json_dumps
from .utils.schema_validator import ConfigError, DatasetConfig, RunConfig, config_hash, load_run_config, parse_run_config

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("binsim.cli")

USAGE_ERRORS = (ConfigError, InvalidGenomeError, UnknownMeasureError)
RUNTIME_ERRORS = (CheckpointError, InitializationError, EquivalenceError, DatasetFormatError,
                  ModelFormatError, OSError, RuntimeError, ValueError)


class BinsimGroup(click.Group):
    """Click group that maps failures to binsim exit codes instead of tracebacks."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else 0
        except click.exceptions.Abort:
            err_console.print("[yellow]Aborted.[/yellow]")
            code = 1
        except click.ClickException as e:
            e.show()
            code = 1
        except UnknownMeasureError as e:
            err_console.print(f"[red]error:[/red] unknown measure {escape(repr(e.args[0]))}")
            code = 1
        except USAGE_ERRORS as e:
            err_console.print(f"[red]error:[/red] {escape(str(e))}")
            code = 1
        except RUNTIME_ERRORS as e:
            logger.debug("runtime failure", exc_info=True)
            err_console.print(f"[red]failed:[/red] {type(e).__name__}: {escape(str(e))}")
            code = 2
        if standalone_mode:
            sys.exit(code)
        return code


def _load_config(config_path: Optional[str], seed: Optional[int], output_dir: Optional[str]) -> RunConfig:
    config = load_run_config(config_path) if config_path else RunConfig()
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if output_dir is not None:
        updates["output_dir"] = output_dir
    return config.model_copy(update=updates) if updates else config


def _load_dataset(cfg: DatasetConfig) -> Dataset:
    if cfg.path:
        return load(cfg.path)
    return synthesize(cfg.seed, cfg.samples, cfg.classes, (cfg.height, cfg.width, cfg.channels), cfg.noise)


def _resume_workspace(checkpoint: Path, payload: dict, config_path: Optional[str],
                      output_dir: Optional[str]) -> Tuple[WorkspaceConfig, RunConfig]:
    """The run directory enclosing ``checkpoint``, or a fresh one rebuilt from its config echo."""
    run_dir = checkpoint.resolve().parent.parent
    if (run_dir / RUN_CONFIG_FILE).exists():
        workspace = WorkspaceManager(str(run_dir.parent)).open_workspace(str(run_dir))
        return workspace, parse_run_config(read_json(workspace.root / RUN_CONFIG_FILE)["config"])

    if "run_config" in payload:
        config = parse_run_config(payload["run_config"])
    else:
        data = _load_config(config_path, None, None).model_dump(mode="json")
        data["search"] = payload.get("config", {})
        config = parse_run_config(data)
    if output_dir is not None:
        config = config.model_copy(update={"output_dir": output_dir})
    workspace = WorkspaceManager(config.output_dir).create_workspace(config, suffix="_resume")
    logger.info(f"Checkpoint {checkpoint} has no enclosing run; continuing in {workspace.root}")
    return workspace, config


def resolve_measure(text: str) -> Tuple[str, Genome]:
    """A registry name or genome text -> (label, genome)."""
    registry = default_registry()
    if text in registry:
        return text, registry.genome(text)
    if re.fullmatch(r"[\d,\s]+", text):
        genome = parse_genome(text)
        return serialize_genome(genome), genome
    raise UnknownMeasureError(text)


def _emit_jsonl(rows: List[dict]):
    for row in rows:
        click.echo(safe_json_dumps(row))


@click.group(cls=BinsimGroup)
@click.option('--debug', is_flag=True, help="Enable DEBUG level logging (overrides BINSIM_LOG).")
def cli(debug: bool):
    """Genetic search for similarity measures in binarized networks."""
    configure_logging(resolve_log_level(debug))


@cli.command()
@click.option('--config', 'config_path', type=click.Path(), help="Run configuration (JSON).")
@click.option('--seed', type=click.IntRange(min=0), help="Override the configuration seed.")
@click.option('--resume', 'resume_path', type=click.Path(), help="Continue from a checkpoint file.")
@click.option('--surrogate-target', help="Use the training-free surrogate fitness with this planted optimum.")
@click.option('--output-dir', help="Override the output directory.")
@click.option('--json', 'as_json', is_flag=True, help="Print the final population as JSON lines.")
def search(config_path, seed, resume_path, surrogate_target, output_dir, as_json):
    """Run the genetic search and write the ranked population."""
    target = parse_genome(surrogate_target) if surrogate_target else None

    if resume_path:
        workspace, config = _resume_workspace(Path(resume_path), read_checkpoint(Path(resume_path)),
                                              config_path, output_dir)
    else:
        config = _load_config(config_path, seed, output_dir)
        manager = WorkspaceManager(config.output_dir)
        workspace = manager.create_workspace(config)

    search_cfg = config.search
    if target is not None:
        fitness_fn = SurrogateFitness(target, epoch_budget=config.train.epochs)
    else:
        dataset = _load_dataset(config.dataset)
        if search_cfg.auto_chance_ratio:
            search_cfg = search_cfg.model_copy(update={"chance_ratio": chance_ratio_for(dataset.num_classes)})
        fitness_fn = FitnessEvaluator.from_dataset(
            config.train, dataset, workspace.path("logs", "evaluations.jsonl")
        )

    checkpoint_dir = workspace.root / workspace.checkpoints_dir
    history_path = workspace.path("logs", "history.jsonl")
    if resume_path:
        engine = GeneticSearch.resume(Path(resume_path), fitness_fn, config.train.epochs,
                                      checkpoint_dir, history_path)
        ledger = getattr(fitness_fn, "ledger", None)
        if ledger is not None and ledger.path.exists():
            # failed evaluations never reach the ledger
            ledger.truncate(sum(1 for r in engine.state.cache.records() if r.error is None))
        if engine.run_config is None:
            engine.run_config = config.model_dump(mode="json")
    else:
        engine = GeneticSearch(search_cfg, fitness_fn, config.seed, config.train.epochs,
                               checkpoint_dir, history_path, run_config=config.model_dump(mode="json"))
    result = engine.run()

    rows = population_table(result.population)
    workspace.path("results", "population.jsonl").write_text(
        "".join(safe_json_dumps({**row, "config_hash": workspace.config_hash}) + "\n" for row in rows)
    )
    write_json_atomic(workspace.path("results", "summary.json"), {
        "run_id": workspace.run_id,
        "config_hash": workspace.config_hash,
        "stop_reason": result.stop_reason,
        "generations": result.state.generation,
        "best": rows[0],
        "cost": result.cost.to_dict(),
        "errors": engine.events.get_error_summary(),
    })
    engine.events.export_logs(str(workspace.path("logs", "events.json")))

    if as_json:
        _emit_jsonl([{**row, "config_hash": workspace.config_hash} for row in rows])
        return

    table = Table(title=f"Final population ({result.stop_reason}, {result.state.generation} generations)")
    table.add_column("Rank", justify="right")
    table.add_column("Genome", style="cyan")
    table.add_column("Formula")
    table.add_column("Fitness", justify="right", style="green")
    table.add_column("Rejected")
    for row in rows:
        table.add_row(str(row["rank"]), row["genome"], row["formula"], f"{row['fitness']:.4f}",
                      "yes" if row["rejected"] else "")
    console.print(table)
    console.print(f"[dim]run {workspace.run_id} · config {workspace.config_hash} · {workspace.root}[/dim]")


@cli.command(name="eval")
@click.option('--measure', required=True, help="Built-in name (baseline, M1..M10) or genome text.")
@click.option('--config', 'config_path', type=click.Path(), help="Run configuration (JSON).")
@click.option('--seed', type=click.IntRange(min=0), help="Override the training seed.")
@click.option('--epochs', type=click.IntRange(min=1), help="Override the epoch budget.")
@click.option('--json', 'as_json', is_flag=True, help="Print the comparison as one JSON line.")
def eval_command(measure, config_path, seed, epochs, as_json):
    """Train with a measure and with the baseline under identical settings."""
    _, genome = resolve_measure(measure)
    config = _load_config(config_path, None, None)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if epochs is not None:
        updates["epochs"] = epochs
        updates["reject_epoch"] = min(config.train.reject_epoch, epochs)
    train_cfg = config.train.model_copy(update=updates) if updates else config.train
    digest = config_hash(config.model_copy(update={"train": train_cfg}))

    dataset = _load_dataset(config.dataset)
    train_set, val_set = split(dataset, train_cfg.validation_fraction, train_cfg.seed)
    candidate = evaluate(genome, 0.0, train_cfg, train_set, val_set)
    baseline = evaluate(BASELINE_GENOME, 0.0, train_cfg, train_set, val_set)
    result = {
        "genome": serialize_genome(genome),
        "formula": decode(genome).formula(),
        "accuracy": candidate.fitness,
        "baseline_accuracy": baseline.fitness,
        "delta": candidate.fitness - baseline.fitness,
        "diverged": candidate.diverged,
        "epochs": train_cfg.epochs,
        "config_hash": digest,
    }
    if as_json:
        _emit_jsonl([result])
        return
    console.print(Panel.fit(
        f"[bold]{result['formula']}[/bold]  ({result['genome']})\n"
        f"measure accuracy:  {result['accuracy']:.4f}\n"
        f"baseline accuracy: {result['baseline_accuracy']:.4f}\n"
        f"delta:             {result['delta']:+.4f}\n"
        f"[dim]{train_cfg.epochs} epochs · config {digest}[/dim]",
        title="Measure evaluation",
    ))


@cli.command(name="decode")
@click.argument('genome_text', required=False)
@click.option('--all-builtins', is_flag=True, help="Decode every built-in measure.")
@click.option('--json', 'as_json', is_flag=True, help="Print JSON lines.")
def decode_command(genome_text, all_builtins, as_json):
    """Print the formula and per-slot operators of a genome."""
    if all_builtins:
        registry = default_registry()
        rows = []
        for name in registry.list_names():
            genome = registry.genome(name)
            rows.append({"name": name, "genome": serialize_genome(genome), "formula": decode(genome).formula()})
        if as_json:
            _emit_jsonl(rows)
            return
        table = Table(title="Built-in measures")
        table.add_column("Name", style="cyan")
        table.add_column("Genome")
        table.add_column("Formula")
        for row in rows:
            table.add_row(row["name"], row["genome"], row["formula"])
        console.print(table)
        return

    if not genome_text:
        raise click.UsageError("give a genome or --all-builtins")
    expr = decode(parse_genome(genome_text))
    if as_json:
        _emit_jsonl([{"genome": serialize_genome(expr.genome), "formula": expr.formula(),
                      "slots": dict(expr.slot_names())}])
        return
    click.echo(expr.formula())
    table = Table(show_header=True)
    table.add_column("Slot")
    table.add_column("Operator")
    for slot, name in expr.slot_names():
        table.add_row(slot, name)
    console.print(table)


@cli.command()
@click.option('--n', 'sizes', type=click.IntRange(min=1), multiple=True,
              help="Vector length in bits (repeatable).")
@click.option('--pairs', default=1000, show_default=True, type=click.IntRange(min=1))
@click.option('--seed', default=0, show_default=True, type=click.IntRange(min=0))
@click.option('--json', 'as_json', is_flag=True, help="Print JSON lines.")
def bench(sizes, pairs, seed, as_json):
    """Time the match-count kernels after checking them against the oracle."""
    results = run_bench(sizes or DEFAULT_SIZES, pairs=pairs, seed=seed,
                        match_fn=match_counts, dot_fn=xnor_dot)
    if as_json:
        _emit_jsonl([r.to_dict() for r in results])
        return
    table = Table(title="Kernel throughput (pairs/sec)")
    table.add_column("n", justify="right")
    table.add_column("checked", justify="right")
    table.add_column("match_counts", justify="right")
    table.add_column("xnor_dot", justify="right")
    table.add_column("matrix (cells/sec)", justify="right")
    for r in results:
        table.add_row(str(r.n), str(r.checked), f"{r.match_counts_per_sec:,.0f}", f"{r.xnor_dot_per_sec:,.0f}",
                      f"{r.matrix_counts_per_sec:,.0f}")
    console.print(table)


def main(argv: Optional[List[str]] = None):
    """Console entry point."""
    # .env is read from the directory the user runs the command in
    load_dotenv(dotenv_path=os.path.join(os.getcwd(), ".env"))
    cli.main(args=argv, prog_name="binsim")


if __name__ == "__main__":
    main()
