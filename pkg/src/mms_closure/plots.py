"""SVG plots of evaluation curves and training metrics."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import read_curve_csv  # noqa: E402
from .ppo import moving_average, read_training_log  # noqa: E402

CGS_COLOR = "tab:red"
RL_COLOR = "tab:blue"


def _band_plot(curve: dict, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = curve["t"]
    for prefix, color, label in (("cgs", CGS_COLOR, "CGS"), ("rl", RL_COLOR, "Closure-RL")):
        ax.plot(t, curve[f"{prefix}_median"], color=color, label=label)
        ax.fill_between(t, curve[f"{prefix}_q25"], curve[f"{prefix}_q75"], color=color, alpha=0.25, linewidth=0)
    positive = np.concatenate([curve["cgs_median"], curve["rl_median"]])
    if np.any(positive > 0):
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_curves(directory: str | Path) -> list[Path]:
    """Render ``mse.svg`` and ``cumulative.svg`` from the CSVs in ``directory``."""
    d = Path(directory)
    out = []
    for stem, label in (("mse", "MSE"), ("cumulative", "cumulative MSE")):
        csv_path = d / f"{stem}.csv"
        if csv_path.exists():
            out.append(_band_plot(read_curve_csv(csv_path), label, d / f"{stem}.svg"))
    return out


def plot_training(log_csv: str | Path, path: str | Path | None = None, window: int = 10) -> Path:
    """Episode reward and length with their moving averages."""
    log = read_training_log(log_csv)
    path = Path(path) if path is not None else Path(log_csv).with_suffix(".svg")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, values, label in ((axes[0], log.rewards, "episode reward"), (axes[1], log.lengths, "episode length")):
        ax.plot(values, color="0.7", linewidth=0.8)
        ax.plot(moving_average(values, window), color="k", linewidth=1.2)
        ax.set_xlabel("episode")
        ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
