"""Report figures rendered to PNG files next to the CSVs they summarize.

Every function takes the output path and plain arrays, opens its own figure
and closes it again, so nothing leaks between calls.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def figure_path(csv_path):
    """``report.csv`` -> ``report.png``."""
    stem = str(csv_path)
    return (stem[:-4] if stem.endswith(".csv") else stem) + ".png"


def count_scatter(path, true, predicted, title=""):
    true, predicted = np.asarray(true, float), np.asarray(predicted, float)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    hi = max(true.max(initial=1.0), predicted.max(initial=1.0)) * 1.05
    ax.plot([0, hi], [0, hi], color="0.6", lw=1)
    ax.scatter(true, predicted, s=14)
    ax.set(xlim=(0, hi), ylim=(0, hi), xlabel="true count", ylabel="predicted count", title=title)
    _save(fig, path)


def loss_curve(path, values, label="loss"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, len(values) + 1), values)
    ax.set(xlabel="step" if len(values) > 200 else "epoch", ylabel=label, yscale="log")
    _save(fig, path)


def deconv_gains(path, radii, delta, seen):
    radii, delta = np.asarray(radii), np.asarray(delta, float)
    colors = ["tab:blue" if s else "tab:orange" for s in seen]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar([str(r) for r in radii], delta, color=colors)
    ax.axhline(0, color="0.3", lw=0.8)
    ax.set(xlabel="kernel radius (blue: trained, orange: unseen)", ylabel="PSNR gain (dB)")
    _save(fig, path)


def perspective_profile(path, rows, values):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(rows, values)
    ax.set(xlabel="image row (top = 0)", ylabel="pixels per metre")
    _save(fig, path)


def filter_manifold(path, aux, filters):
    """First input channel of each filter bank along the aux sweep, one row per aux value."""
    filters = [np.asarray(w, float) for w in filters]
    filters = [w[0] if w.ndim == 5 else w for w in filters]  # drop a leading batch axis
    n, f = len(filters), min(filters[0].shape[0], 8)
    fig, axes = plt.subplots(n, f, figsize=(1.1 * f, 1.1 * n), squeeze=False)
    for i, w in enumerate(filters):
        for j in range(f):
            ax = axes[i, j]
            ax.imshow(w[j, 0], cmap="gray", interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if j == 0:
                ax.set_ylabel(f"{aux[i]:.3g}", fontsize=7)
    _save(fig, path)
