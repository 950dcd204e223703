"""SVG figures: fit profiles against the KK ratings, and MCE against correlation."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_profiles", "plot_scatter"]

PITCH_NAMES = ["I", "#I", "II", "#II", "III", "IV", "#IV", "V", "#V", "VI", "#VI", "VII"]


def _save(fig, path) -> Path:
    path = Path(path)
    # fixed id salt and no date so identical inputs give identical files
    with matplotlib.rc_context({"svg.hashsalt": "tonalrnn"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_profiles(mode_profiles: dict, kk, path) -> Path:
    """Bar chart of the model's fit profile per mode next to the min-max scaled KK ratings."""
    modes = [m for m in ("major", "minor") if m in mode_profiles]
    fig, axes = plt.subplots(1, len(modes), figsize=(5 * len(modes), 3.2), squeeze=False)
    x = np.arange(12)
    for ax, mode in zip(axes[0], modes):
        ref = np.asarray(kk.profile(mode), dtype=np.float64)
        ref = (ref - ref.min()) / (ref.max() - ref.min())
        ax.bar(x - 0.2, np.asarray(mode_profiles[mode]), 0.4, label="model")
        ax.bar(x + 0.2, ref, 0.4, label="KK")
        ax.set_xticks(x, PITCH_NAMES, fontsize=7)
        ax.set_title(mode)
        ax.set_ylim(0, 1.05)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_scatter(rows: Sequence[dict], path) -> Path:
    """Test MCE against r_major / r_minor; shuffled runs drawn hollow."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, colour in (("r_major", "tab:blue"), ("r_minor", "tab:orange")):
        for shuf in (0, 1):
            pts = [(r["test_mce"], r[key]) for r in rows
                   if r.get("shuf") == shuf and r.get(key) is not None and r.get("test_mce") is not None]
            if not pts:
                continue
            mce, r = np.array(pts, dtype=np.float64).T
            ax.scatter(mce, r, edgecolors=colour, facecolors="none" if shuf else colour,
                       label=f"{key}{' (shuf)' if shuf else ''}")
    ax.set_xlabel("test MCE")
    ax.set_ylabel("Pearson r with KK")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
