"""Static SVG figures for sweep, scaling and benchmark reports.

Figures are written with a fixed hash salt and no date metadata so repeated
runs produce identical files.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.figsize": (3.4, 2.6),
    "svg.hashsalt": "kerrsense",
    "svg.fonttype": "path",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_curve(curve, path, title: str | None = None) -> Path:
    """Photon number and precision against detuning, on twin axes."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        x = curve.detunings / (2 * math.pi * 1e3)
        ax.plot(x, curve.n_mean, color="k", label=r"$\langle n\rangle$")
        ax.set_xlabel(r"$\tilde\delta/2\pi$ (kHz)")
        ax.set_ylabel(r"$\langle n\rangle$")
        ax2 = ax.twinx()
        ax2.errorbar(x, curve.precision, yerr=curve.precision_err, color="C3", fmt=".",
                     elinewidth=0.5, label="precision")
        ax2.set_ylabel(r"precision (rad$^{-2}$s$^{2}$)", color="C3")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_scaling(l_values, p_max, beta_fit, path) -> Path:
    """Log-log maximum precision against system size with the fitted power law."""
    l_values = np.asarray(l_values, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        ax.loglog(l_values, p_max, "o", color="k")
        grid = np.geomspace(l_values.min(), l_values.max(), 50)
        ax.loglog(grid, np.exp(beta_fit.log_prefactor) * grid ** beta_fit.beta, "-", color="C0",
                  label=rf"$\beta = {beta_fit.beta:.2f} \pm {beta_fit.stderr:.2f}$")
        ax.set_xlabel("L")
        ax.set_ylabel(r"max precision")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_classical(delta_p, precision, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        ax.plot(np.asarray(delta_p) / (2 * math.pi * 1e3), precision, color="k")
        ax.set_xlabel(r"$\Delta_p/2\pi$ (kHz)")
        ax.set_ylabel("classical precision")
        return _save(fig, path)


def plot_s21(freqs, s21, fit_curve, path) -> Path:
    """Measured and fitted transmission in the complex plane."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        ax.plot(np.real(s21), np.imag(s21), ".", color="C3", label="data")
        ax.plot(np.real(fit_curve), np.imag(fit_curve), "-", color="k", label="fit")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel(r"Re $S_{21}$")
        ax.set_ylabel(r"Im $S_{21}$")
        ax.legend(frameon=False)
        return _save(fig, path)
