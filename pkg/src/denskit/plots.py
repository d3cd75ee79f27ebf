"""Report figures, rendered headless and reproducibly.

The SVG hash salt is pinned so element ids do not depend on the process,
and the date metadata is stripped; rerunning a report with the same inputs
reproduces the files byte for byte.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "denskit"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}, "bbox_inches": "tight"}


def save_growth_plot(fit, path, title: str = "derivative growth") -> None:
    """Derivative magnitudes by total order against the fitted envelope."""
    ks = sorted({sum(alpha) for alpha, _, _ in fit.entries})
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    xs = [sum(alpha) for alpha, mag, _ in fit.entries if mag > 0.0]
    ys = [mag for _, mag, _ in fit.entries if mag > 0.0]
    ax.semilogy(xs, ys, "o", ms=3.5, alpha=0.6, label="|derivative|")
    ax.semilogy(ks, [fit.bound(k) for k in ks], "-",
                label=f"C (L(k+1))^k, L={fit.rate:.3f}")
    ax.set_xlabel("total order k")
    ax.set_ylabel("magnitude")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_cusp_plot(radii, values, path, title: str = "spherical average") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(radii, values, "o-", ms=3.5)
    ax.set_xlabel("r")
    ax.set_ylabel("rho_tilde(r)")
    ax.set_title(title)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_ray_plot(radii, values, reference, path,
                  title: str = "density along a ray") -> None:
    """Computed density against an independent reference route."""
    fig, (ax, bx) = plt.subplots(
        2, 1, figsize=(5.0, 4.6), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]},
    )
    ax.semilogy(radii, values, "o", ms=3.5, label="cutoff split")
    ax.semilogy(radii, reference, "-", lw=1.0, label="reference")
    ax.set_ylabel("rho")
    ax.set_title(title)
    ax.legend(frameon=False)
    resid = [abs(v - r) / abs(r) if r else 0.0 for v, r in zip(values, reference)]
    bx.semilogy(radii, resid, "s-", ms=3.0, color="crimson")
    bx.set_xlabel("|x|")
    bx.set_ylabel("rel. diff")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
