"""Rate plot: log mean loss against delta squared, written as static SVG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import RateFit  # noqa: E402

_RC = {
    "svg.hashsalt": "gmmspectral-rate",  # fixed element ids
    "svg.fonttype": "none",  # keep text as text, no embedded glyph paths
    "font.family": "DejaVu Sans",
}


def render_rate_svg(fit: RateFit, path: Path) -> None:
    """Scatter of the grid means, the fitted line, and the reference slope.

    The reference line shares the fitted line's value at the left end of
    the grid so the two slopes can be compared by eye.
    """
    deltas = np.asarray(fit.deltas, dtype=np.float64)
    means = np.asarray(fit.mean_losses, dtype=np.float64)
    used = np.isfinite(means) & (means > 0)
    x = deltas**2
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(x[used], np.log(means[used]), "o", color="#1f77b4", label="log mean loss")
        if (~used).any():
            # censored points sit on the lower axis edge
            lo = np.log(means[used]).min() if used.any() else -1.0
            ax.plot(x[~used], np.full((~used).sum(), lo - 0.5), "v", color="#7f7f7f",
                    label="zero loss (censored)")
        xs = np.linspace(x.min(), x.max(), 2) if x.size else np.array([0.0, 1.0])
        ax.plot(xs, fit.intercept + fit.slope * xs, "-", color="#d62728",
                label=f"fit: slope {fit.slope:.4f}")
        anchor = fit.intercept + fit.slope * xs[0]
        ax.plot(xs, anchor + fit.reference_slope * (xs - xs[0]), "--", color="#2ca02c",
                label=f"reference slope {fit.reference_slope:g}")
        ax.set_xlabel("Δ²")
        ax.set_ylabel("log mean misclustering loss")
        ax.set_title(f"{fit.algorithm}: {fit.n_points_used} points used, {fit.n_censored} censored")
        ax.legend(loc="lower left", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
