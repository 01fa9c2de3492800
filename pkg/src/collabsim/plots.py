"""Report figures rendered alongside the delimited metric tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import AggregateReport, EpisodeMetrics


def render_report_figures(
    aggregate: AggregateReport,
    episodes: list[EpisodeMetrics],
    out_dir: str | Path,
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    if aggregate.success_by_task_type:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        names = list(aggregate.success_by_task_type)
        means = [aggregate.success_by_task_type[n].mean for n in names]
        errs = [aggregate.success_by_task_type[n].se for n in names]
        ax.bar(range(len(names)), means, yerr=errs, capsize=3, color="#4878a8")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=15, ha="right", fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("success rate")
        ax.set_title("Success rate per task type")
        fig.tight_layout()
        path = out / "success_by_task_type.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)

    steps = [m.sim_steps for m in episodes]
    if steps:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.hist(steps, bins=min(20, max(5, len(steps) // 3)), color="#72a86e")
        ax.set_xlabel("simulation steps")
        ax.set_ylabel("episodes")
        ax.set_title("Episode duration")
        fig.tight_layout()
        path = out / "sim_steps_hist.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)

    collab = [
        ("task_offloading", "#a87272"),
        ("extraneous_effort", "#a89a56"),
        ("percent_complete", "#5a72a8"),
    ]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    labels, means, errs, colors = [], [], [], []
    for name, color in collab:
        summary = aggregate.metrics.get(name)
        if summary is not None and summary.n > 0:
            labels.append(name.replace("_", " "))
            means.append(summary.mean)
            errs.append(summary.se)
            colors.append(color)
    if labels:
        ax.bar(range(len(labels)), means, yerr=errs, capsize=3, color=colors)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_title("Collaboration metrics (mean ± SE)")
        fig.tight_layout()
        path = out / "collaboration_metrics.png"
        fig.savefig(path, dpi=120)
        paths.append(path)
    plt.close(fig)
    return paths
