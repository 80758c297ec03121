"""Figure rendering for the report paths.

Every experiment writes its numbers as CSV/JSON first; these helpers render
the matching matplotlib figures next to them.  All functions save to a file
and close the figure; nothing is shown interactively.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def marginal_histograms(path, training, generated, labels=None, names=("training", "generated")):
    """Per-coordinate histogram overlays of two sample sets."""
    d = training.shape[0]
    labels = labels or [f"x{k + 1}" for k in range(d)]
    fig, axes = plt.subplots(1, d, figsize=(4.5 * d, 3.5))
    axes = np.atleast_1d(axes)
    for k, ax in enumerate(axes):
        ax.hist(training[k], bins=50, density=True, alpha=0.55, label=names[0])
        ax.hist(generated[k], bins=50, density=True, alpha=0.55, label=names[1])
        ax.set_xlabel(labels[k])
        ax.legend()
    _save(fig, path)


def ring_overview(path, training, projected, noisy_aware, noisy_unaware):
    """Scatter of the ring plus radial/angular histograms of the noisy samples."""
    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    axes[0].plot(training[0], training[1], ".", ms=2, alpha=0.4, label="training")
    axes[0].plot(projected[0], projected[1], ".", ms=2, alpha=0.4, label="projected")
    axes[0].set_aspect("equal")
    axes[0].legend(markerscale=4)
    for samples, label in [
        (training, "training"),
        (noisy_aware, "aware"),
        (noisy_unaware, "unaware"),
    ]:
        theta = np.arctan2(samples[1], samples[0])
        radius = np.hypot(samples[0], samples[1])
        axes[1].hist(theta, bins=50, density=True, histtype="step", label=label)
        axes[2].hist(radius, bins=50, density=True, histtype="step", label=label)
    axes[1].set_xlabel("angle")
    axes[2].set_xlabel("radius")
    axes[1].legend()
    _save(fig, path)


def ot_vs_beta(path, betas, ot, marginal, ot_fixed, marginal_fixed):
    """Transport distance against the bandwidth exponent, with the flat baseline."""
    betas = np.asarray(betas, dtype=float)
    order = np.argsort(-betas)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    for ax, values, baseline, title in [
        (axes[0], np.asarray(ot), ot_fixed, "OT distance"),
        (axes[1], np.asarray(marginal), marginal_fixed, "marginal OT (last coord)"),
    ]:
        ax.plot(-betas[order], values[order], "o-", label="variable bandwidth")
        ax.axhline(baseline, ls="--", color="k", label="fixed bandwidth")
        ax.set_xscale("log")
        ax.set_xlabel("-beta")
        ax.set_title(title)
        ax.legend()
    _save(fig, path)


def last_coordinate_comparison(path, reference, fixed, variable):
    """Histogram and CDF of the last coordinate for both bandwidth choices."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    for values, label in [(reference, "reference"), (fixed, "fixed"), (variable, "variable")]:
        axes[0].hist(values, bins=50, density=True, histtype="step", label=label)
        sorted_v = np.sort(values)
        axes[1].plot(sorted_v, np.arange(1, sorted_v.size + 1) / sorted_v.size, label=label)
    axes[0].set_xlabel("last coordinate")
    axes[1].set_xlabel("last coordinate")
    axes[1].set_ylabel("CDF")
    axes[0].legend()
    _save(fig, path)


def subgrid_overview(path, psi_training, z_training, z_generated, dt):
    """Closure-term histogram, slow time series, and slow-variable histogram."""
    fig, axes = plt.subplots(1, 3, figsize=(14, 3.8))
    axes[0].hist(psi_training, bins=50, density=True)
    axes[0].set_xlabel("closure term")
    t = np.arange(z_generated.size) * dt
    axes[1].plot(t, z_generated, lw=0.6)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("z")
    axes[2].hist(z_training, bins=50, density=True, histtype="step", label="full model")
    axes[2].hist(z_generated, bins=50, density=True, histtype="step", label="surrogate")
    axes[2].set_xlabel("z")
    axes[2].legend()
    _save(fig, path)


def trajectory_overview(path, training, generated, dt):
    """First-coordinate time series and the attractor projection."""
    fig, axes = plt.subplots(2, 2, figsize=(11, 6))
    for row, (traj, label) in enumerate([(training, "training"), (generated, "generated")]):
        t = np.arange(traj.shape[1]) * dt
        axes[row, 0].plot(t, traj[0], lw=0.6)
        axes[row, 0].set_ylabel(f"y1 ({label})")
        axes[row, 1].plot(traj[0], traj[2], lw=0.3)
        axes[row, 1].set_xlabel("y1")
        axes[row, 1].set_ylabel("y3")
    axes[1, 0].set_xlabel("t")
    _save(fig, path)


def evaluation_histograms(path, generated, reference):
    """Per-coordinate histogram overlays for the evaluate report."""
    marginal_histograms(path, reference, generated, names=("reference", "generated"))
