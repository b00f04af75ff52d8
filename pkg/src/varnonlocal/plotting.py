"""Report figures (matplotlib, file output only)."""

from __future__ import annotations

from contextlib import contextmanager

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_sweep", "plot_modular_growth", "plot_denoise"]

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "savefig.bbox": "tight",
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "varnonlocal",
}


@contextmanager
def _figure(path, nrows=1, ncols=1):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(nrows, ncols)
        try:
            yield fig, ax
            fig.savefig(path, metadata=_metadata(path))
        finally:
            plt.close(fig)


def _metadata(path):
    s = str(path).lower()
    if s.endswith(".png"):
        return {"Software": None}
    if s.endswith(".pdf"):
        return {"Creator": None, "Producer": None, "CreationDate": None}
    if s.endswith(".svg"):
        return {"Date": None, "Creator": None}
    return None


def plot_sweep(report, path) -> None:
    """Lambda_delta against delta with the reference energy and extrapolated limit."""
    with _figure(path, 1, 2) as (fig, (ax1, ax2)):
        d, v = report.deltas, report.values
        ok = report.resolved
        ax1.semilogx(d[ok], v[ok], "o-", label="resolved")
        if (~ok).any():
            ax1.semilogx(d[~ok], v[~ok], "x", color="gray", label="under-resolved")
        ax1.axhline(report.local_energy, color="k", lw=0.8, ls="--", label="local energy")
        if report.limit is not None:
            ax1.axhline(report.limit, color="C3", lw=0.8, ls=":", label="extrapolated")
        ax1.set_xlabel("delta")
        ax1.set_ylabel("Lambda_delta")
        ax1.legend()
        err = np.abs(report.rel_errors)
        keep = ok & (err > 0)
        if keep.any():
            ax2.loglog(d[keep], err[keep], "o-")
        ax2.set_xlabel("delta")
        ax2.set_ylabel("relative error")
        if report.rate is not None:
            ax2.set_title(f"fitted rate {report.rate:.3f}")
        fig.tight_layout()


def plot_modular_growth(report, path) -> None:
    with _figure(path) as (fig, ax):
        ax.loglog(report.radii, report.modular_u, "o-", label="modular of u")
        ax.loglog(report.radii, report.modular_Mu, "s-", label="modular of M(u)")
        ax.set_xlabel("R")
        ax.set_ylabel("modular on [-R, R]")
        ax.set_title(f"growth exponent {report.fitted_exponent:.3f}")
        ax.legend()


def plot_denoise(f, u, trace, path) -> None:
    with _figure(path, 1, 2) as (fig, (ax1, ax2)):
        if f.domain.n == 1:
            x = f.domain.axis_centers(0)
            ax1.plot(x, f.flat, lw=0.8, color="gray", label="input")
            ax1.plot(x, u.flat, lw=1.2, label="output")
            ax1.legend()
        else:
            ax1.imshow(u.values.T, origin="lower", aspect="auto")
        ax1.set_title("signal")
        e = np.asarray(trace.energies)
        plot = ax2.semilogy if np.all(e > 0) else ax2.plot
        plot(np.arange(e.size), e, "-")
        ax2.set_xlabel("iteration")
        ax2.set_ylabel("energy")
        fig.tight_layout()
