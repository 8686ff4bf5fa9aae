"""Figure rendering for the report path.

Every CLI command that emits delimited output can also render PNG figures
next to it.  The CSV/JSON files remain the machine-readable contract; the
figures are the quick-look companions (world lines, energy decay, density
profiles, convergence decay).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_trajectory",
    "plot_energy",
    "plot_continuum",
    "plot_convergence",
    "save_figure",
]


def plot_trajectory(traj):
    """World lines x_i(t), colored by initial charge, events marked."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    times = traj.times
    X = np.array([st.x for st in traj.states])
    b0 = traj.states[0].b_init
    for i in range(X.shape[1]):
        color = "tab:red" if b0[i] > 0 else "tab:blue"
        ax.plot(times, X[:, i], color=color, lw=0.8, alpha=0.8)
    for ev in traj.events:
        for i in ev.indices:
            col = traj.states[-1].x[i]
            ax.plot([ev.t], [col], "kx", ms=5)
    ax.set_xlabel("t")
    ax.set_ylabel("position")
    ax.set_title(f"n = {traj.n}, {len(traj.events)} annihilation events")
    fig.tight_layout()
    return fig


def plot_energy(traj):
    """Energy trace and cumulative dissipation."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(traj.times, traj.energies, label="energy", color="tab:red")
    ax.plot(traj.times, traj.energies[0] - traj.dissipation, "--",
            label="E(0) - dissipation", color="tab:gray")
    for ev in traj.events:
        ax.axvline(ev.t, color="k", lw=0.5, alpha=0.4)
    ax.set_xlabel("t")
    ax.set_ylabel("E_n")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_continuum(snaps):
    """Density profiles of the first, middle, and final snapshot."""
    picks = [snaps[0], snaps[len(snaps) // 2], snaps[-1]]
    fig, axes = plt.subplots(1, len(picks), figsize=(11, 3.2), sharey=True)
    for ax, s in zip(np.atleast_1d(axes), picks):
        xs = s.grid.centers
        ax.plot(xs, s.rho_plus, color="tab:red", label="rho+")
        ax.plot(xs, s.rho_minus, color="tab:blue", label="rho-")
        ax.plot(xs, s.kappa, color="k", lw=0.8, label="kappa")
        ax.set_title(f"t = {s.t:.3g}")
        ax.set_xlabel("x")
    np.atleast_1d(axes)[0].legend()
    fig.tight_layout()
    return fig


def plot_convergence(table):
    """sup-in-time pair distance against n, log-log, with a 1/n guide."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ns = [r.n for r in table.rows]
    ds = [r.sup_distance for r in table.rows]
    ax.loglog(ns, ds, "o-", label=f"vs {table.reference}")
    guide = [ds[0] * ns[0] / n for n in ns]
    ax.loglog(ns, guide, "--", color="gray", label="~ 1/n")
    ax.set_xlabel("n")
    ax.set_ylabel("sup_t distance")
    ax.legend()
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=140)
    plt.close(fig)
