"""Figure rendering for the report path (2-D problems only).

Everything draws to files through the Agg backend; callers on other
dimensions get None back and the delimited outputs remain authoritative.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch

from .grid import LayerStack, SafeRegion
from .synthesis import MultiController

_LAYER_CMAP = plt.get_cmap("tab10")


def _layer_color(l):
    return _LAYER_CMAP((l - 1) % 10)


def _domain_raster(controller: MultiController, stack: LayerStack):
    """RGB image at layer-1 resolution; coarser layers painted last so the
    picture matches what the quantizer would use."""
    c = stack.counts(1)
    img = np.ones((int(c[1]), int(c[0]), 3))
    for l in stack.layers:
        lifted = stack.gamma(controller.domain(l), 1)
        mask = lifted.bits.reshape(int(c[0]), int(c[1])).T
        img[mask] = _layer_color(l)[:3]
    return img


def _paint_obstacles(ax, region: SafeRegion):
    for a, b in region.obstacles:
        ax.add_patch(plt.Rectangle((a[0], a[1]), b[0] - a[0], b[1] - a[1],
                                   facecolor="black", edgecolor="none"))


def render_domain_map(path, controller: MultiController, stack: LayerStack,
                      region: SafeRegion = None, title: str = ""):
    """Controller-domain map colored by layer; obstacles in black."""
    if stack.dim != 2:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    img = _domain_raster(controller, stack)
    ax.imshow(img, origin="lower", aspect="auto",
              extent=(stack.alpha[0], stack.beta[0],
                      stack.alpha[1], stack.beta[1]),
              interpolation="nearest")
    if region is not None:
        _paint_obstacles(ax, region)
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    if title:
        ax.set_title(title)
    handles = [Patch(facecolor=_layer_color(l), label=f"layer {l}")
               for l in stack.layers if len(controller.domain(l))]
    if handles:
        ax.legend(handles=handles, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_compare_bars(path, rows):
    """Stacked abstraction/synthesis runtime bars, one group per mode.
    rows: list of (label, abstraction_seconds, synthesis_seconds)."""
    labels = [r[0] for r in rows]
    abstr = np.array([r[1] for r in rows])
    synth = np.array([r[2] for r in rows])
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(x, abstr, width=0.6, label="abstraction", color="#7065b3")
    ax.bar(x, synth, width=0.6, bottom=abstr, label="synthesis",
           color="#4787c7")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("runtime [s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_trajectories(path, controller: MultiController, stack: LayerStack,
                        trajectories, region: SafeRegion = None,
                        title: str = ""):
    """Closed-loop sample paths over the domain map."""
    if stack.dim != 2:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    img = _domain_raster(controller, stack)
    ax.imshow(img, origin="lower", aspect="auto",
              extent=(stack.alpha[0], stack.beta[0],
                      stack.alpha[1], stack.beta[1]),
              interpolation="nearest", alpha=0.5)
    if region is not None:
        _paint_obstacles(ax, region)
    for traj in trajectories:
        pts = np.asarray(traj.states)
        ax.plot(pts[:, 0], pts[:, 1], lw=0.8, color="black", alpha=0.7)
        ax.plot(pts[0, 0], pts[0, 1], marker="o", ms=3, color="red")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
