"""Matplotlib figures written next to the CSV reports."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (5.0, 3.2)


def _finish(fig, ax, path):
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_objective(traces, path, title=None):
    """Objective value against epoch; ``traces`` maps a label to EpochRecords."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, records in traces.items():
        if not records:
            continue
        ax.plot([r.epoch for r in records], [r.q_value for r in records], label=label, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective Q")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    if len(traces) > 1:
        ax.legend(fontsize=8)
    _finish(fig, ax, path)


def plot_sweep(values, means, sds, path, xlabel="mu_max", ylabel="PSNR (dB)", logx=True):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.errorbar(values, means, yerr=sds, marker="o", capsize=3, lw=1.2)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    _finish(fig, ax, path)


def plot_inpainting(original, masked, recovered, path):
    """Side-by-side original / masked / recovered RGB rasters."""
    fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.8))
    for ax, img, name in zip(axes, (original, masked, recovered),
                             ("original", "masked", "recovered")):
        ax.imshow(np.asarray(img, dtype=np.uint8), interpolation="nearest")
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
