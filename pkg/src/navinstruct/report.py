"""Report rendering: JSON summaries, CSV tables, and PNG figures."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .assembly import DatasetStats
from .metrics import EvalItem, NavEpisode, NavSummary, SUCCESS_RADIUS, tokenize

logger = logging.getLogger(__name__)

FIGURE_DPI = 150


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


# --------------------------------------------------------------------------- #
# language metrics
# --------------------------------------------------------------------------- #

def write_language_report(scores: dict[str, float], corpus: Sequence[EvalItem],
                          out_dir: str | Path, stem: str = "language") -> list[Path]:
    """Render metric scores next to a hypothesis length histogram."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    png_path = out / f"{stem}.png"

    _write_json(json_path, {"items": len(corpus), "metrics": scores})
    _write_csv(csv_path, ["metric", "score"],
               [[name, f"{scores[name]:.4f}"] for name in sorted(scores)])

    names = sorted(scores)
    lengths = [len(tokenize(item.hyp)) for item in corpus]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    left.bar(range(len(names)), [scores[n] for n in names], color="#4878a8")
    left.set_xticks(range(len(names)))
    left.set_xticklabels(names, rotation=20, ha="right")
    left.set_ylabel("score")
    left.set_title("language metrics")
    right.hist(lengths, bins=max(5, min(20, len(set(lengths)))), color="#76a86c")
    right.set_xlabel("hypothesis tokens")
    right.set_ylabel("items")
    right.set_title("length distribution")
    fig.tight_layout()
    _save(fig, png_path)
    logger.info("language report: %s", out)
    return [json_path, csv_path, png_path]


# --------------------------------------------------------------------------- #
# navigation metrics
# --------------------------------------------------------------------------- #

def _episode_rows(episodes: Sequence[NavEpisode]) -> list[list]:
    rows = []
    for ep in episodes:
        length = sum(a.distance_to(b) for a, b in zip(ep.path, ep.path[1:]))
        error = ep.path[-1].distance_to(ep.goal)
        success = 1 if error <= SUCCESS_RADIUS else 0
        if length == 0.0 and ep.geodesic == 0.0:
            weighted = float(success)
        else:
            weighted = success * ep.geodesic / max(length, ep.geodesic)
        rows.append([ep.id, f"{length:.4f}", f"{error:.4f}", success,
                     f"{weighted:.4f}"])
    return rows


def write_navigation_report(summary: NavSummary, episodes: Sequence[NavEpisode],
                            out_dir: str | Path,
                            stem: str = "navigation") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    png_path = out / f"{stem}.png"

    _write_json(json_path, {"episodes": len(episodes),
                            "metrics": summary.as_dict()})
    _write_csv(csv_path, ["id", "length", "error", "success", "weighted_success"],
               _episode_rows(episodes))

    errors = [ep.path[-1].distance_to(ep.goal) for ep in episodes]
    lengths = [sum(a.distance_to(b) for a, b in zip(ep.path, ep.path[1:]))
               for ep in episodes]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    left.scatter(lengths, errors, s=18, color="#4878a8", alpha=0.7)
    left.axhline(SUCCESS_RADIUS, color="#a85050", linestyle="--",
                 label=f"success radius {SUCCESS_RADIUS:g} m")
    left.set_xlabel("path length (m)")
    left.set_ylabel("nav error (m)")
    left.set_title("episodes")
    left.legend()
    metric_names = ["TL", "NE", "SR", "SPL"]
    values = [summary.as_dict()[n] for n in metric_names]
    right.bar(range(len(metric_names)), values, color="#76a86c")
    right.set_xticks(range(len(metric_names)))
    right.set_xticklabels(metric_names)
    right.set_title("summary")
    fig.tight_layout()
    _save(fig, png_path)
    logger.info("navigation report: %s", out)
    return [json_path, csv_path, png_path]


# --------------------------------------------------------------------------- #
# dataset statistics
# --------------------------------------------------------------------------- #

def write_stats_report(stats: DatasetStats, records: Sequence[dict],
                       out_dir: str | Path, stem: str = "stats") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    png_path = out / f"{stem}.png"

    counts = stats.as_dict()
    _write_json(json_path, counts)
    _write_csv(csv_path, ["measure", "count"],
               [[name, counts[name]] for name in sorted(counts)])

    lengths = [len(tokenize(r.get("instruction", ""))) for r in records]
    names = sorted(counts)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    left.bar(range(len(names)), [counts[n] for n in names], color="#4878a8")
    left.set_xticks(range(len(names)))
    left.set_xticklabels(names, rotation=20, ha="right")
    left.set_title("dataset counts")
    if lengths:
        right.hist(lengths, bins=max(5, min(20, len(set(lengths)))),
                   color="#76a86c")
    right.set_xlabel("instruction tokens")
    right.set_ylabel("records")
    right.set_title("instruction lengths")
    fig.tight_layout()
    _save(fig, png_path)
    logger.info("stats report: %s", out)
    return [json_path, csv_path, png_path]
