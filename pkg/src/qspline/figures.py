"""Report figures rendered straight from a solution, no interactivity.

Three views cover what the CSV artifacts contain: the interpolating
trajectory (Bloch sphere for two-level problems, component populations
otherwise), the driving field's strength and rotation axis (two-level only),
and the descent history.  ``render_report`` writes the applicable subset as
PNGs next to the delimited output and returns their paths.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .forward import DiscretePath
from .optimizer import Solution
from .state_geom import bloch_coords, field_decomposition

__all__ = ["trajectory_figure", "field_figure", "cost_figure", "render_report"]

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "savefig.dpi": 150,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
    }
)


def _wire_sphere(ax) -> None:
    u = np.linspace(0.0, 2.0 * np.pi, 25)
    v = np.linspace(0.0, np.pi, 13)
    x = np.outer(np.cos(u), np.sin(v))
    y = np.outer(np.sin(u), np.sin(v))
    z = np.outer(np.ones_like(u), np.cos(v))
    ax.plot_wireframe(x, y, z, color="0.8", linewidth=0.3)
    ax.set_box_aspect((1, 1, 1))
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")


def trajectory_figure(path: DiscretePath) -> plt.Figure:
    """Interpolating trajectory with its target states marked.

    Two-level problems get the Bloch-sphere view; higher dimensions fall
    back to component populations |psi_i(t)|^2 over the grid.
    """
    spec = path.spec
    states = np.asarray(path.states(), dtype=complex)
    times = spec.times()
    if spec.dim == 2:
        fig = plt.figure(figsize=(5.0, 5.0))
        ax = fig.add_subplot(111, projection="3d")
        _wire_sphere(ax)
        xyz = np.array([bloch_coords(s) for s in states])
        ax.plot(xyz[:, 0], xyz[:, 1], xyz[:, 2], color="C0", linewidth=1.4)
        ax.scatter(*xyz[0], color="C0", s=40, label="start")
        for j, tp in enumerate(spec.targets.targets):
            bx, by, bz = bloch_coords(tp.state)
            ax.scatter(
                bx, by, bz, color="C3", marker="*", s=90,
                label="targets" if j == 0 else None,
            )
        ax.legend(loc="upper left")
        ax.set_title("state trajectory")
    else:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for i in range(spec.dim):
            ax.plot(times, np.abs(states[:, i]) ** 2, label=f"|psi_{i}|^2")
        for tp in spec.targets.targets:
            ax.axvline(tp.time, color="0.75", linewidth=0.8, zorder=0)
        ax.set_xlabel("t")
        ax.set_ylabel("population")
        ax.legend(loc="best", fontsize=8)
        ax.set_title("component populations (target times marked)")
    fig.tight_layout()
    return fig


def field_figure(path: DiscretePath) -> plt.Figure:
    """Field strength omega(t) beside the rotation-axis orbit (two-level)."""
    spec = path.spec
    if spec.dim != 2:
        raise ValueError(f"field figure needs a two-level problem, got dim {spec.dim}")
    times = spec.times()
    decs = [field_decomposition(np.asarray(h, dtype=complex)) for h in path.H]
    omegas = np.array([d.omega for d in decs])
    axes3 = np.array([d.axis for d in decs])

    fig = plt.figure(figsize=(9.0, 4.0))
    ax_w = fig.add_subplot(1, 2, 1)
    ax_w.plot(times, omegas, color="C0")
    for tp in spec.targets.targets:
        ax_w.axvline(tp.time, color="0.75", linewidth=0.8, zorder=0)
    ax_w.set_xlabel("t")
    ax_w.set_ylabel("omega")
    ax_w.set_title("field strength")

    ax_a = fig.add_subplot(1, 2, 2, projection="3d")
    _wire_sphere(ax_a)
    ax_a.plot(axes3[:, 0], axes3[:, 1], axes3[:, 2], color="C1", linewidth=1.4)
    ax_a.scatter(*axes3[0], color="C1", s=40)
    ax_a.set_title("rotation-axis orbit")
    fig.tight_layout()
    return fig


def cost_figure(sol: Solution) -> plt.Figure:
    """Descent history: cost (left axis) and gradient norm (right, log)."""
    hist = np.array([(it, c, g) for it, c, g, _ in sol.history])
    fig, ax_c = plt.subplots(figsize=(6.0, 3.6))
    ax_c.plot(hist[:, 0], hist[:, 1], color="C0", label="cost")
    ax_c.set_xlabel("iteration")
    ax_c.set_ylabel("cost", color="C0")
    ax_g = ax_c.twinx()
    ax_g.semilogy(hist[:, 0], np.maximum(hist[:, 2], 1e-300), color="C2", label="|grad|")
    ax_g.set_ylabel("gradient norm", color="C2")
    ax_g.grid(False)
    ax_c.set_title("descent history")
    fig.tight_layout()
    return fig


def render_report(sol: Solution, out_dir) -> list:
    """Write every figure that applies to this solution into out_dir."""
    written = []
    jobs = [("trajectory.png", trajectory_figure(sol.path))]
    if sol.spec.dim == 2:
        jobs.append(("field.png", field_figure(sol.path)))
    jobs.append(("cost_history.png", cost_figure(sol)))
    for name, fig in jobs:
        target = f"{out_dir}/{name}"
        fig.savefig(target)
        plt.close(fig)
        written.append(target)
    return written
