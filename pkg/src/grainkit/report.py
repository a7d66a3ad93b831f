"""Render report figures next to the delimited output files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport, RobustnessTable


def evaluation_figure(report: EvalReport, path: str | Path) -> None:
    """Two-panel summary: segmentation scores per image, density parity."""
    if not report.records:
        return
    rows = [r.as_row() for r in report.records]
    names = [r["name"] or str(i) for i, r in enumerate(rows)]
    x = np.arange(len(rows))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))

    width = 0.27
    ax1.bar(x - width, [r["ap50"] for r in rows], width, label="AP@0.50")
    ax1.bar(x, [r["map_50_95"] for r in rows], width, label="mAP 0.50-0.95")
    ax1.bar(x + width, [r["boundary_f1"] for r in rows], width, label="Boundary F1")
    ax1.set_xticks(x)
    ax1.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("score")
    ax1.set_title("Segmentation quality")
    ax1.legend(fontsize=8)

    gt_na = [r["n_a_gt"] for r in rows]
    pred_na = [r["n_a_pred"] for r in rows]
    lim = max(max(gt_na), max(pred_na)) * 1.1 if gt_na else 1.0
    ax2.plot([0, lim], [0, lim], "k--", lw=0.8)
    ax2.scatter(gt_na, pred_na, s=18)
    ax2.set_xlabel("true $N_A$ (grains/mm$^2$)")
    ax2.set_ylabel("predicted $N_A$")
    ax2.set_title("Grain density parity")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def robustness_figure(table: RobustnessTable, path: str | Path) -> None:
    """MAPE of G and N_A versus target grain count, one line per circle mode."""
    if not table.rows:
        return
    modes = sorted({r.mode for r in table.rows})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for mode in modes:
        rows = sorted(
            (r for r in table.rows if r.mode == mode), key=lambda r: r.target
        )
        targets = [r.target for r in rows]
        ax1.plot(targets, [r.g_mape for r in rows], marker="o", label=mode)
        ax2.plot(targets, [r.n_a_mape for r in rows], marker="o", label=mode)
    ax1.set_xlabel("target grain count")
    ax1.set_ylabel("G MAPE (%)")
    ax1.set_title("Grain size number error")
    ax2.set_xlabel("target grain count")
    ax2.set_ylabel("$N_A$ MAPE (%)")
    ax2.set_title("Grain density error")
    for ax in (ax1, ax2):
        ax.axvline(50, color="gray", lw=0.8, ls=":")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
