"""Batch-simulation reports: CSV tables plus matplotlib figures on disk."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simulate import BatchSummary


def write_runs_csv(summary: BatchSummary, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mistakes", "turns", "completed"])
        for run in summary.runs:
            writer.writerow([run.seed, run.mistakes, run.turns, int(run.completed)])
    return path


def write_summary_csv(summary: BatchSummary, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "policy", "n_runs", "first_seed", "mean_mistakes", "std_mistakes",
             "mean_turns", "std_turns", "completion_rate"]
        )
        writer.writerow(
            [summary.mode, summary.policy_kind, summary.n_runs, summary.first_seed,
             f"{summary.mean_mistakes:.6f}", f"{summary.std_mistakes:.6f}",
             f"{summary.mean_turns:.6f}", f"{summary.std_turns:.6f}",
             f"{summary.completion_rate:.6f}"]
        )
    return path


def render_mistake_histogram(summary: BatchSummary, path: Path) -> Path:
    counts = [run.mistakes for run in summary.runs]
    upper = max(counts) if counts else 0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(counts, bins=range(0, upper + 2), align="left", rwidth=0.85, color="#4878a8")
    ax.set_xlabel("mistakes per run")
    ax.set_ylabel("runs")
    ax.set_title(f"Mistakes over {summary.n_runs} runs ({summary.policy_kind}, {summary.mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_turns_by_skill(summary: BatchSummary, path: Path) -> Path:
    skills = list(summary.per_skill_turns_mean)
    values = [summary.per_skill_turns_mean[s] for s in skills]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(skills)), values, color="#6aa66a")
    ax.set_xticks(range(len(skills)))
    ax.set_xticklabels(skills, rotation=30, ha="right")
    ax.set_ylabel("mean turns per run")
    ax.set_title("Per-skill conversation turns")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_batch_report(summary: BatchSummary, out_dir: str | Path) -> list[Path]:
    """Write the delimited tables and figures for one batch; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_runs_csv(summary, out / "runs.csv"),
        write_summary_csv(summary, out / "summary.csv"),
        render_mistake_histogram(summary, out / "mistakes_hist.png"),
    ]
    if summary.per_skill_turns_mean:
        written.append(render_turns_by_skill(summary, out / "turns_by_skill.png"))
    return written
