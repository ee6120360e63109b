"""Report figures written straight to files (Agg backend, no display needed)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_entropies(entropies: dict[str, float], path: str | Path) -> Path:
    """Bar chart of per-column Shannon entropy in bits."""
    names = list(entropies)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, [entropies[n] for n in names], color="#4c72b0")
    ax.set_ylabel("entropy (bits)")
    ax.set_title("Metadata diversity")
    ax.tick_params(axis="x", rotation=30)
    return _save(fig, path)


def plot_stealthiness(stats: dict, path: str | Path) -> Path:
    """Mean SSIM vs genuine per fraud type, with one-stddev error bars."""
    names = sorted(stats)
    means = [stats[n].mean for n in names]
    stds = [stats[n].std for n in names]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, means, yerr=stds, capsize=4, color="#dd8452")
    lo = min((m - s for m, s in zip(means, stds)), default=0.0)
    ax.set_ylim(max(0.0, lo - 0.02), 1.0)
    ax.set_ylabel("SSIM vs genuine")
    ax.set_title("Fraud stealthiness")
    ax.tick_params(axis="x", rotation=30)
    return _save(fig, path)


def plot_tuning_trace(reports: dict, path: str | Path) -> Path:
    """Best-so-far segment SSIM against evaluation step, one line per segment."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for seg, rep in sorted(reports.items()):
        ax.plot([t[0] for t in rep.trace], [t[1] for t in rep.trace], label=seg)
    ax.set_xlabel("step")
    ax.set_ylabel("best segment SSIM")
    ax.set_title("Overlay tuning convergence")
    ax.legend(fontsize=8)
    return _save(fig, path)
