"""Figures written next to the delimited report output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .conformance import PILLAR_TITLES, ConformanceReport  # noqa: E402

STATUS_COLORS = {
    "pass": "#2e7d32",
    "fail": "#c62828",
    "not_applicable": "#9e9e9e",
    "out_of_scope": "#eeeeee",
}


def scorecard(report: ConformanceReport, path: str | Path) -> Path:
    """One row per pillar, colored by status."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    by_pillar = {c.pillar: c.status for c in report.checks}
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    for n in range(1, 11):
        status = by_pillar.get(n, "out_of_scope")
        ax.barh(n, 1, color=STATUS_COLORS[status], edgecolor="#444444", linewidth=0.5)
        ax.text(0.02, n, f"{n}. {PILLAR_TITLES[n]}", va="center", fontsize=8)
        ax.text(0.98, n, status.replace("_", " "), va="center", ha="right", fontsize=8)
    passed, applicable = report.score
    ax.set_title(f"{report.kind} conformance: {passed}/{applicable}", fontsize=10)
    ax.set_ylim(10.6, 0.4)
    ax.set_xlim(0, 1)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def usage_chart(reports: Sequence[dict], path: str | Path) -> Path:
    """Access counts per mesh PID, hatched where identities were returned."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels, counts, named = [], [], []
    for r in reports:
        for e in r.get("entries", []):
            labels.append(f"{r['platform_id']}\n…{e['mesh_pid'][-8:]}")
            counts.append(e["count"])
            named.append(bool(e["identities"]))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels) + 1.5), 3.6))
    if labels:
        bars = ax.bar(range(len(labels)), counts, color="#1565c0")
        for bar, has_ids in zip(bars, named):
            if has_ids:
                bar.set_hatch("//")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, fontsize=7)
    else:
        ax.text(0.5, 0.5, "no usage in period", ha="center", va="center", transform=ax.transAxes)
    ax.set_ylabel("accesses")
    ax.set_title("usage returned to platforms (hatched: identities included)", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
