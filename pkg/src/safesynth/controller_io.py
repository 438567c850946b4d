"""Versioned text format for synthesized controllers, plus domain CSV export.

Header carries the format version and the grid fingerprint (dimension, layer
count, alpha, beta, eta1, tau1); floats are written with repr so a write/read
round trip is bit-exact. Body: one line per domain cell, sorted by (layer,
cell index): `layer cell_index input_index`.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ConfigError
from .grid import LayerStack
from .synthesis import MultiController

FORMAT_VERSION = 1


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.atleast_1d(values))


def write_controller(path, controller: MultiController, stack: LayerStack):
    with open(path, "w") as fh:
        fh.write(f"safesynth-controller {FORMAT_VERSION}\n")
        fh.write(f"dim {stack.dim}\n")
        fh.write(f"layers {stack.num_layers}\n")
        fh.write(f"alpha {_fmt(stack.alpha)}\n")
        fh.write(f"beta {_fmt(stack.beta)}\n")
        fh.write(f"eta1 {_fmt(stack.eta1)}\n")
        fh.write(f"tau1 {repr(stack.tau1)}\n")
        fh.write(f"inputs {len_inputs(controller)}\n")
        fh.write(f"domain {controller.total_cells()}\n")
        for l in stack.layers:
            choice = controller.choices[l - 1]
            for cell in controller.domain(l).indices():
                fh.write(f"{l} {int(cell)} {int(choice[cell])}\n")
        fh.write("end\n")


def len_inputs(controller: MultiController) -> int:
    best = -1
    for c in controller.choices:
        if c.size:
            best = max(best, int(c.max()))
    return best + 1


def read_controller(path):
    """Parse a controller file; returns (controller, stack). The stack is
    rebuilt from the fingerprint (periodicity is a property of the problem
    config, not of the stored domain, and is not needed here)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("safesynth-controller "):
        raise ConfigError(f"{path}: not a controller file")
    version = lines[0].split()[1]
    if int(version) != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {version}")

    header = {}
    body_at = None
    for i, ln in enumerate(lines[1:], start=1):
        key, _, rest = ln.partition(" ")
        header[key] = rest
        if key == "domain":
            body_at = i + 1
            break
    for key in ("dim", "layers", "alpha", "beta", "eta1", "tau1", "domain"):
        if key not in header:
            raise ConfigError(f"{path}: missing header line {key!r}")

    dim = int(header["dim"])
    num_layers = int(header["layers"])
    stack = LayerStack(
        np.array([float(v) for v in header["alpha"].split()]),
        np.array([float(v) for v in header["beta"].split()]),
        np.array([float(v) for v in header["eta1"].split()]),
        float(header["tau1"]), num_layers)
    if stack.dim != dim:
        raise ConfigError(f"{path}: dim does not match alpha/beta length")

    expected = int(header["domain"])
    choices = [np.full(stack.num_cells(l), -1, dtype=np.int64)
               for l in stack.layers]
    count = 0
    for ln in lines[body_at:]:
        if ln == "end":
            break
        try:
            l, cell, u = (int(v) for v in ln.split())
        except ValueError:
            raise ConfigError(f"{path}: malformed domain line {ln!r}") from None
        if not 1 <= l <= num_layers or not 0 <= cell < stack.num_cells(l):
            raise ConfigError(f"{path}: domain line out of range: {ln!r}")
        choices[l - 1][cell] = u
        count += 1
    else:
        raise ConfigError(f"{path}: missing 'end' terminator")
    if count != expected:
        raise ConfigError(f"{path}: header promises {expected} domain cells, "
                          f"found {count}")

    from .grid import CellSet
    domains = [CellSet(l, choices[l - 1] >= 0) for l in stack.layers]
    return MultiController(domains=domains, choices=choices), stack


def fingerprint_matches(a: LayerStack, b: LayerStack) -> bool:
    return (a.dim == b.dim and a.num_layers == b.num_layers
            and np.array_equal(a.alpha, b.alpha)
            and np.array_equal(a.beta, b.beta)
            and np.array_equal(a.eta1, b.eta1)
            and a.tau1 == b.tau1)


def export_domain_csv(path, controller: MultiController, stack: LayerStack):
    """One row per domain cell: layer, linear index, center coordinates,
    chosen input index."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "cell_index"]
                   + [f"center_{i}" for i in range(stack.dim)]
                   + ["input_index"])
        for l in stack.layers:
            idx = controller.domain(l).indices()
            if idx.size == 0:
                continue
            centers = stack.cell_centers(l, idx)
            choice = controller.choices[l - 1]
            for cell, c in zip(idx, centers):
                w.writerow([l, int(cell)] + [repr(float(v)) for v in c]
                           + [int(choice[cell])])
