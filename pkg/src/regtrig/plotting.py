"""Static plot of a trajectory CSV: |x(t)| on a log axis and the estimate traces."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .csvio import _prefixed, read_csv  # noqa: E402


def plot_trajectory(trajectory_csv, out_path):
    cols = read_csv(trajectory_csv)
    t = cols["t"]
    x = _prefixed(cols, "x_")
    th = _prefixed(cols, "thetahat_")
    xnorm = np.linalg.norm(x, axis=1)

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    pos = xnorm > 0
    ax1.semilogy(t[pos], xnorm[pos], lw=1)
    for te in t[cols["event_flag"] == 1]:
        ax1.axvline(te, color="0.8", lw=0.5, zorder=0)
    ax1.set_ylabel("|x(t)|")
    for i in range(th.shape[1]):
        ax2.step(t, th[:, i], where="post", label=f"thetahat_{i + 1}")
    ax2.set_xlabel("t")
    ax2.set_ylabel("estimate")
    ax2.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
