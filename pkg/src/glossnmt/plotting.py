"""Static figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}  # keep PNG bytes stable across runs


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_train_log(log, path) -> Path:
    epochs = [r.epoch for r in log.records]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(epochs, [r.loss for r in log.records])
    axes[0].set(title="train loss", xlabel="epoch")
    dev = [(r.epoch, r.dev_bleu4) for r in log.records if r.dev_bleu4 is not None]
    if dev:
        axes[1].plot(*zip(*dev))
        if log.best_epoch is not None:
            axes[1].axvline(log.best_epoch, ls="--", c="grey")
    axes[1].set(title="dev BLEU-4", xlabel="epoch")
    for attr, label in (("alpha_enc", "encoder"), ("alpha_dec", "decoder")):
        pts = [(r.epoch, getattr(r, attr)) for r in log.records if getattr(r, attr) is not None]
        if pts:
            axes[2].plot(*zip(*pts), label=label)
    axes[2].set(title="alpha", xlabel="epoch", ylim=(-0.05, 1.05))
    if axes[2].lines:
        axes[2].legend()
    return _save(fig, path)


def plot_ablation(summary: Sequence[dict], path, column: str = "bleu4") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["config"] for r in summary]
    ax.bar(names, [r[column] for r in summary], color="tab:blue")
    ax.set(ylabel=f"median dev {column}", title="ablation")
    return _save(fig, path)


def plot_sweep(rows: Sequence[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    param = rows[0]["param"]
    xs = [r["value"] for r in rows]
    ax.plot(range(len(xs)), [r["dev_bleu4"] for r in rows], marker="o")
    ax.set_xticks(range(len(xs)), [str(x) for x in xs])
    ax.set(xlabel=param, ylabel="dev BLEU-4")
    return _save(fig, path)


def plot_alpha(rows: Sequence[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = [k for k in rows[0] if k != "epoch"]
    for k in keys:
        pts = [(r["epoch"], r[k]) for r in rows if r[k] is not None]
        if pts:
            ax.plot(*zip(*pts), label=k)
    ax.set(xlabel="epoch", ylabel="alpha", ylim=(-0.05, 1.05))
    ax.legend()
    return _save(fig, path)
