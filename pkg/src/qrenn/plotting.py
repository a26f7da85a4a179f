"""Static figures written next to the CSV outputs (Agg backend, PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402



def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "qrenn"})
    plt.close(fig)
    return path


def plot_gradstats(rows: list, path) -> Path:
    """Variance against ``n`` (one line per ``T``) or against ``T`` when only one ``n``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ns = sorted({r["n"] for r in rows})
    ts = sorted({r["T"] for r in rows})
    xkey, groups, gkey = ("T", ns, "n") if len(ns) == 1 and len(ts) > 1 else ("n", ts, "T")
    for g in groups:
        sel = sorted((r for r in rows if r[gkey] == g), key=lambda r: r[xkey])
        x = [r[xkey] for r in sel]
        ax.errorbar(x, [r["variance"] for r in sel],
                    yerr=[2 * r["variance"] * np.sqrt(2 / max(r["samples"] - 1, 1)) for r in sel],
                    marker="o", capsize=3, label=f"{gkey}={g}")
        pred = [r["predicted_variance"] for r in sel]
        if all(np.isfinite(pred)):
            ax.plot(x, pred, "k--", lw=1)
    ax.set_yscale("log")
    ax.set_xlabel(xkey)
    ax.set_ylabel("Var[dL]")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_loss(curve: list, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(curve)), curve)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    return _save(fig, Path(path))


def plot_spt(lams, fhat, labels, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    lams, fhat, labels = map(np.asarray, (lams, fhat, labels))
    for lab, colour in ((0, "tab:blue"), (1, "tab:red")):
        sel = labels == lab
        ax.scatter(lams[sel], fhat[sel], s=8, c=colour, label=f"label {lab}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.axvline(1.0, color="grey", ls=":", lw=0.8)
    ax.set_xlabel("lambda")
    ax.set_ylabel("f_hat")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_size_sweep(sweep: list, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar([s["train_size"] for s in sweep], [s["mean_accuracy"] for s in sweep],
                yerr=[s["std_accuracy"] for s in sweep], marker="o", capsize=3)
    ax.set_xlabel("training samples")
    ax.set_ylabel("test accuracy")
    return _save(fig, Path(path))


def plot_overlap(rows: list, path) -> Path:
    probes = sorted({r["probe"] for r in rows})
    fig, axes = plt.subplots(1, len(probes), figsize=(4 * len(probes), 3.2), squeeze=False)
    for ax, probe in zip(axes[0], probes):
        for n in sorted({r["n"] for r in rows}):
            sel = sorted((r for r in rows if r["probe"] == probe and r["n"] == n), key=lambda r: r["lambda"])
            ax.plot([r["lambda"] for r in sel], [r["overlap"] for r in sel], label=f"n={n}")
        ax.set_title(probe)
        ax.set_xlabel("lambda")
        ax.set_ylim(0, 1.02)
    axes[0][0].set_ylabel("R^2")
    axes[0][-1].legend(fontsize=8)
    return _save(fig, Path(path))
