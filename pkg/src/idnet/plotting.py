"""Optional four-panel trajectory figure (needs matplotlib)."""

from __future__ import annotations

import numpy as np

from .dynamics import Trajectory


def _group(traj: Trajectory, base: str) -> np.ndarray:
    cols = [i for i, n in enumerate(traj.names) if n == base or n.startswith(base + ".")]
    return traj.x[:, cols].sum(axis=1)


def plot_trajectory(traj: Trajectory, path, title: str = "") -> None:
    """Cells, cytokines, id/anti-id/antigen, and the id vs anti-id plane, saved as SVG or PDF."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed metadata keeps the SVG output reproducible
    plt.rcParams["svg.hashsalt"] = "idnet"
    fig, ax = plt.subplots(2, 2, figsize=(10, 7))
    t = traj.t
    for name in ("th1", "th2", "macrophage"):
        ax[0, 0].plot(t, _group(traj, name), label=name)
    ax[0, 0].set_title("cells")
    for name in ("cyt_a", "cyt_b", "cyt_c"):
        ax[0, 1].plot(t, _group(traj, name), label=name)
    ax[0, 1].set_title("cytokines")
    idt = _group(traj, "naive") + _group(traj, "th1") + _group(traj, "th2")
    anti = _group(traj, "anti_id")
    ax[1, 0].plot(t, idt, label="id cells")
    ax[1, 0].plot(t, anti, label="anti_id")
    ax[1, 0].plot(t, _group(traj, "antigen"), label="antigen")
    ax[1, 0].set_title("id / anti-id / antigen")
    ax[1, 1].plot(idt, anti)
    ax[1, 1].set_xlabel("id cells")
    ax[1, 1].set_ylabel("anti_id")
    ax[1, 1].set_title("id vs anti-id")
    for a in ax.flat[:3]:
        a.set_xlabel("t")
        a.legend(fontsize=8)
    for m in traj.events:
        for a in ax.flat[:3]:
            a.axvline(m.time, color="grey", lw=0.6, ls=":")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
