"""Figure rendering for the report paths, always written next to the data."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(steps, losses, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1.2)
    ax.axhline(np.log(2), color="grey", ls="--", lw=0.8, label="constant-0.5 loss")
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("binary cross entropy")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_score_map(score_map: np.ndarray, path, gt=None, best=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(np.asarray(score_map), origin="lower", cmap="viridis", vmin=0.0, vmax=1.0)
    if gt is not None:
        ax.plot(gt[1], gt[0], "r*", ms=12, label="ground truth")
    if best is not None:
        ax.plot(best[1], best[0], "wo", mfc="none", ms=12, label="top prediction")
    ax.set_xlabel("end frame")
    ax.set_ylabel("start frame")
    if gt is not None or best is not None:
        ax.legend(loc="lower right", frameon=False, labelcolor="white")
    fig.colorbar(im, ax=ax, label="matching score")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metric_bars(report: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = [entry["metric"] for entry in report]
    values = [entry["value"] for entry in report]
    fig, ax = plt.subplots(figsize=(max(4, 1.1 * len(labels)), 4))
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 100)
    ax.set_ylabel("recall (%)")
    for i, v in enumerate(values):
        ax.text(i, v + 1.5, f"{v:.1f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
