"""Figures written next to the text reports: loss curves, per-class recall, attention maps."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.image as mpimg  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata off so identical inputs give identical bytes
_PNG_META = {"Software": None}


def parse_log(lines):
    """``key=value`` training log lines -> {key: np.ndarray}."""
    cols: dict[str, list[float]] = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        for tok in line.split():
            k, _, v = tok.partition("=")
            cols.setdefault(k, []).append(float(v))
    return {k: np.asarray(v) for k, v in cols.items()}


def plot_loss_curves(log_lines, path, components=("ind", "cls", "loc", "part", "assn")):
    cols = parse_log(log_lines)
    if "step" not in cols:
        raise ValueError("log has no step column")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(cols["step"], cols["loss"], color="black", lw=1.5, label="total")
    for name in components:
        if name in cols:
            ax.plot(cols["step"], cols[name], lw=1.0, label=name)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=8, ncol=3)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def plot_class_recall(report, path, k=100):
    """Horizontal bars of threshold-averaged recall per class at ``k``."""
    recs = report.class_recall(k)
    names = [report._name(c) for c in report.classes]
    fig, ax = plt.subplots(figsize=(6.4, 0.4 * max(len(names), 3) + 1.0))
    y = np.arange(len(names))
    ax.barh(y, [recs[c] for c in report.classes], color="0.35")
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlim(0, 100)
    ax.set_xlabel(f"R@{k} (%)")
    ax.set_title(f"AR {report.ar:.2f}")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def save_attention_maps(attn, out_dir, prefix="", part_names=None):
    """Write every (H, W) map of ``attn`` (P, H, W) as a grayscale PNG.

    Each map is min-max scaled on its own; a constant map becomes black.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    attn = np.asarray(attn, dtype=np.float64)
    paths = []
    for p, m in enumerate(attn):
        lo, hi = m.min(), m.max()
        img = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
        name = part_names[p] if part_names else f"part{p:02d}"
        path = out_dir / f"{prefix}{name}.png"
        mpimg.imsave(path, img, cmap="gray", vmin=0.0, vmax=1.0, metadata=_PNG_META)
        paths.append(path)
    return paths
