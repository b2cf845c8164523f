"""Report figures. Rendered with the Agg backend and without timestamp
metadata, so repeated runs produce identical PNG bytes."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "path.simplify": False,
}

_METADATA = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def plot_histogram(centers_ns, counts, bin_width, background_mean, background_sigma, path, title=""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        ax.bar(centers_ns, counts, width=bin_width, color="0.55", edgecolor="0.3", linewidth=0.4)
        ax.axhline(background_mean, color="tab:blue", lw=1, label="background mean")
        ax.axhline(background_mean + 3 * background_sigma, color="tab:red", lw=1, ls="--", label="mean + 3 sigma")
        ax.set_xlabel("D = t_exp - t_ret [ns]")
        ax.set_ylabel(f"counts / {bin_width:g} ns")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        _save(fig, path)


def plot_bin_scan(widths, significances, path, title=""):
    sig = np.asarray(significances, dtype=float)
    finite = np.where(np.isfinite(sig), sig, np.nan)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.plot(widths, finite, "o-", color="k")
        ax.axhline(3.0, color="tab:red", ls="--", lw=1, label="3 sigma")
        ax.set_xlabel("bin width [ns]")
        ax.set_ylabel("peak significance [sigma]")
        ax.set_xticks(list(widths))
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        _save(fig, path)


def plot_range(epochs_s, ranges_m, path, title=""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.6, 3.4))
        ax.plot(epochs_s, np.asarray(ranges_m) / 1e3, color="k", lw=1)
        ax.set_xlabel("time since pass start [s]")
        ax.set_ylabel("range [km]")
        if title:
            ax.set_title(title)
        _save(fig, path)
