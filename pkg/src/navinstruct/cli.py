"""Command line interface: generate, evaluate, stats, validate."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__, assembly, metrics, pipeline, report
from .navgraph import load_graph
from .providers import ProviderError

logger = logging.getLogger(__name__)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn, *args, **kwargs):
    """Map failures onto exit codes: bad input 1, missing resources 2."""
    try:
        return fn(*args, **kwargs)
    except (FileNotFoundError, ProviderError) as exc:
        _fail(str(exc), 2)
    except ValueError as exc:
        _fail(str(exc), 1)


@click.group()
@click.version_option(version=__version__, prog_name="navinstruct")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Generate and evaluate navigation instruction datasets."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


# --------------------------------------------------------------------------- #
# generate
# --------------------------------------------------------------------------- #

@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(dir_okay=False),
              help="Pipeline configuration (JSON).")
@click.option("--out", "out", default=None,
              help="Output dataset path (overrides the config).")
@click.option("--seed", type=int, default=None,
              help="Sampling seed (overrides the config).")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Trajectories processed in parallel.")
@click.option("--force", is_flag=True,
              help="Regenerate even if a completed run exists.")
def generate(config_path: str, out: str | None, seed: int | None,
             workers: int, force: bool) -> None:
    """Run the full pipeline and write a dataset with its manifest."""
    def run():
        config = pipeline.PipelineConfig.from_file(config_path)
        if seed is not None:
            config.seed = seed
        if workers < 1:
            raise ValueError("workers must be at least 1")
        return config, pipeline.generate(config, out, workers=workers,
                                         force=force)

    config, manifest = _guarded(run)
    target = out or config.out
    click.echo(f"wrote {manifest['counts']['instructions']} instructions "
               f"for {manifest['counts']['trajectories']} trajectories "
               f"to {target}")
    click.echo(f"manifest: {pipeline.manifest_path_for(target)}")


# --------------------------------------------------------------------------- #
# evaluate
# --------------------------------------------------------------------------- #

def _detect_schema(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                first = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON: {exc}") from exc
            if "hyp" in first and "refs" in first:
                return "language"
            if "path" in first and "goal" in first:
                return "navigation"
            raise ValueError(f"{path}: records match neither the language "
                             f"(hyp/refs) nor the navigation (path/goal) "
                             f"schema")
    raise ValueError(f"{path}: file is empty")


@main.command()
@click.argument("input_path", type=click.Path(dir_okay=False))
@click.option("--out-dir", default="reports", show_default=True,
              help="Directory for the JSON/CSV/PNG report files.")
def evaluate(input_path: str, out_dir: str) -> None:
    """Score a corpus (language metrics) or episodes (navigation metrics)."""
    def run():
        kind = _detect_schema(input_path)
        if kind == "language":
            corpus = metrics.load_eval_corpus(input_path)
            scores = metrics.language_metrics(corpus)
            paths = report.write_language_report(scores, corpus, out_dir)
            return scores, paths
        episodes = metrics.load_episodes(input_path)
        summary = metrics.navigation_metrics(episodes)
        paths = report.write_navigation_report(summary, episodes, out_dir)
        return summary.as_dict(), paths

    scores, paths = _guarded(run)
    for name in sorted(scores):
        click.echo(f"{name}: {scores[name]:.2f}")
    for path in paths:
        click.echo(f"report: {path}")


# --------------------------------------------------------------------------- #
# stats
# --------------------------------------------------------------------------- #

@main.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--out-dir", default="reports", show_default=True,
              help="Directory for the JSON/CSV/PNG report files.")
def stats(dataset: str, out_dir: str) -> None:
    """Summarize a generated dataset."""
    def run():
        records = assembly.read_records(dataset)
        counts = assembly.dataset_statistics(records)
        paths = report.write_stats_report(counts, records, out_dir)
        return counts, paths

    counts, paths = _guarded(run)
    for name, value in counts.as_dict().items():
        click.echo(f"{name}: {value}")
    for path in paths:
        click.echo(f"report: {path}")


# --------------------------------------------------------------------------- #
# validate
# --------------------------------------------------------------------------- #

@main.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--graph", "graph_path", default=None,
              type=click.Path(dir_okay=False),
              help="Connectivity graph to check paths against.")
def validate(dataset: str, graph_path: str | None) -> None:
    """Check every record against the dataset schema."""
    def run():
        graph = load_graph(graph_path) if graph_path else None
        if not Path(dataset).exists():
            raise FileNotFoundError(f"dataset not found: {dataset}")
        with open(dataset, encoding="utf-8") as fh:
            total = sum(1 for line in fh if line.strip())
        return total, assembly.validate_dataset(dataset, graph)

    total, violations = _guarded(run)
    if violations:
        for violation in violations:
            click.echo(violation, err=True)
        _fail(f"{len(violations)} violation(s) in {dataset}", 1)
    click.echo(f"OK: {total} records")


if __name__ == "__main__":
    main()
