"""Optional figure output for ``levystop solve --plot``."""

from __future__ import annotations

import numpy as np


def plot_solution(spec, sol, path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise RuntimeError("--plot needs matplotlib (pip install 'artifact[plot]')") from exc

    b = sol.boundaries
    lo, hi = (min(b) if b else 0.0) - 3.0, (max(b) if b else 0.0) + 3.0
    xs = np.linspace(lo, hi, 1200)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, spec.reward(xs), label="g", color="0.3", lw=1.2)
    ax.plot(xs, sol.value(xs), label="v", color="C0", lw=1.6)
    for l, r in sol.gamma:
        ax.axvspan(max(l, lo), min(r, hi), color="C3", alpha=0.12, lw=0)
    for e in b:
        ax.axvline(e, color="C3", ls=":", lw=0.8)
    ax.set_xlim(lo, hi)
    ax.set_xlabel("x")
    ax.legend(loc="best", frameon=False)
    ax.set_title("stopping region shaded")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
