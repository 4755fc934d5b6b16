"""Figure rendering for CLI reports (PNG/PDF/SVG via matplotlib, Agg backend)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .freqresp import FreqResponse, bode_data, sigma_data  # noqa: E402
from .simulation import TimeResponse  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.labelsize": 10,
    "savefig.dpi": 150,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_step(responses: Sequence[TimeResponse], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, r in enumerate(responses):
            name = r.system_name or f"sys{k + 1}"
            n_y, n_u = r.outputs.shape[1:]
            for i in range(n_y):
                for j in range(n_u):
                    label = name if n_y * n_u == 1 else f"{name} y{i + 1}<-u{j + 1}"
                    ax.plot(r.times, r.outputs[:, i, j], label=label)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("amplitude")
        ax.set_title("Step response")
        ax.legend()
        _save(fig, path)


def plot_sigma(responses: Sequence[FreqResponse], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, fr in enumerate(responses):
            sv = sigma_data(fr)
            with np.errstate(divide="ignore"):
                db = 20 * np.log10(sv)
            name = fr.system_name or f"sys{k + 1}"
            lines = ax.semilogx(fr.omegas, db, color=f"C{k}")
            lines[0].set_label(name)
        ax.set_xlabel("frequency (rad/s)")
        ax.set_ylabel("singular values (dB)")
        ax.legend()
        _save(fig, path)


def plot_bode(responses: Sequence[FreqResponse], path) -> None:
    with plt.rc_context(STYLE):
        fig, (ax_m, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
        for k, fr in enumerate(responses):
            mag, phase = bode_data(fr)
            name = fr.system_name or f"sys{k + 1}"
            flat_m = mag.reshape(len(fr.omegas), -1)
            flat_p = phase.reshape(len(fr.omegas), -1)
            ax_m.semilogx(fr.omegas, flat_m, color=f"C{k}", label=name)
            ax_p.semilogx(fr.omegas, flat_p, color=f"C{k}")
        ax_m.set_ylabel("magnitude (dB)")
        ax_p.set_ylabel("phase (deg)")
        ax_p.set_xlabel("frequency (rad/s)")
        handles, labels = ax_m.get_legend_handles_labels()
        uniq = dict(zip(labels, handles))
        ax_m.legend(uniq.values(), uniq.keys())
        _save(fig, path)


def plot_hsv(hsv, path) -> None:
    """Bar chart of the normalized state energies of a balanced realization."""
    hsv = np.asarray(hsv, dtype=float)
    frac = hsv / hsv.sum() if hsv.sum() > 0 else hsv
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(1, len(hsv) + 1)
        ax.bar(idx, frac)
        ax.set_xlabel("balanced state")
        ax.set_ylabel("energy fraction")
        if len(hsv) <= 30:
            ax.set_xticks(idx)
        _save(fig, path)


def plot_timing(rows, path, label="") -> None:
    n = np.array([r["n"] for r in rows])
    mean = np.array([r["mean_time"] for r in rows])
    std = np.array([r["std_time"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(n, mean, yerr=std, marker="o", ms=3, capsize=2, label=label or None)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("number of states")
        ax.set_ylabel("time (s)")
        if label:
            ax.legend()
        _save(fig, path)


def plot_h2_comparison(delays, analytic, computed, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(delays, analytic, "o", label="analytic")
        ax.plot(delays, computed, "-", label="quadrature")
        ax.set_xlabel("delay h")
        ax.set_ylabel("H2 norm")
        ax.legend()
        _save(fig, path)
