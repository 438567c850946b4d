"""Built-in benchmark systems and the named right-hand-side registry.

Built-ins are expressed as plain key-value defaults so a config file can
override any of them through the one assembly path in `config`.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

TAU_FULL_TURN = math.tau


def _fmt_vec(v):
    return " ".join(repr(float(x)) for x in v)


def _fmt_mat(m):
    return "; ".join(_fmt_vec(row) for row in m)


# -- named nonlinear right-hand sides -----------------------------------------

def _rhs_spiral(x, u):
    """Planar rotation in polar coordinates: the input steers the radius,
    the angle advances at unit rate."""
    out = np.empty_like(x)
    out[..., 0] = -0.1 * x[..., 0] + u[0]
    out[..., 1] = 1.0
    return out


def _rhs_zero(x, u):
    return np.zeros_like(x)


RHS_REGISTRY = {
    "spiral": (2, _rhs_spiral),
    "zero": (None, _rhs_zero),
}


def named_rhs(name, dim):
    if name not in RHS_REGISTRY:
        raise ConfigError(f"system.rhs: unknown right-hand side {name!r} "
                          f"(known: {sorted(RHS_REGISTRY)})")
    want_dim, fn = RHS_REGISTRY[name]
    if want_dim is not None and dim != want_dim:
        raise ConfigError(f"system.rhs {name!r} requires system.dim = {want_dim}")
    return fn


# -- boost converter ------------------------------------------------------------

def dcdc_matrices():
    """Switched-mode second-order converter model: two modes p in {1, 2} with
    dynamics Ap x + b plus an additive disturbance."""
    r0, vs, rl = 1.0, 1.0, 0.05
    rc = 0.5 * rl
    xl, xc = 3.0, 70.0
    b = np.array([vs / xl, 0.0])
    a1 = np.array([
        [-rl / xl, 0.0],
        [0.0, -(1.0 / xc) * (r0 / (r0 + rc))],
    ])
    a2 = np.array([
        [-(1.0 / xl) * (rl + (r0 * rc) / (r0 + rc)),
         (1.0 / 5.0) * (-(1.0 / xl) * (r0 / (r0 + rc)))],
        [5.0 * (r0 / (r0 + rc)) * (1.0 / xc),
         -(1.0 / xc) * (1.0 / (r0 + rc))],
    ])
    return [a1, a2], b


def dcdc_defaults():
    mats, b = dcdc_matrices()
    kv = {
        "name": "dcdc",
        "system.dim": "2",
        "system.b": _fmt_vec(b),
        "system.w": "0.001 0.001",
        "Y.lower": "1.15 5.45",
        "Y.upper": "1.55 5.85",
        "T.lower": "1.15 5.45",
        "T.upper": "1.55 5.85",
        "eta1": "0.0005 0.0005",
        "tau1": "0.0625",
        "layers": "6",
        "substeps": "10",
        "mode": "lazy",
        "seed": "0",
    }
    for k, m in enumerate(mats, start=1):
        kv[f"system.A.{k}"] = _fmt_mat(m)
    return kv


def spiral_defaults():
    """Polar-coordinate rotation benchmark; the angle dimension is periodic
    and the two obstacle boxes force finer layers near them. Obstacle angles
    are multiples of the finest angular cell width."""
    step = TAU_FULL_TURN / 128.0
    kv = {
        "name": "spiral",
        "system.dim": "2",
        "system.rhs": "spiral",
        "system.inputs": "-0.2; -0.1; 0.0; 0.1; 0.2",
        "system.w": "0 0",
        "system.L": "-0.1 0; 0 0",
        "system.periodic": "0 " + repr(TAU_FULL_TURN),
        "Y.lower": "0.5 0",
        "Y.upper": "2.5 " + repr(TAU_FULL_TURN),
        "T.lower": "0.5 0",
        "T.upper": "2.5 " + repr(TAU_FULL_TURN),
        "obstacle.1.lower": "1.125 " + repr(28 * step),
        "obstacle.1.upper": "1.875 " + repr(51 * step),
        "obstacle.2.lower": "0.75 " + repr(80 * step),
        "obstacle.2.upper": "1.375 " + repr(103 * step),
        "eta1": "0.025 " + repr(step),
        "tau1": "0.2",
        "layers": "3",
        "substeps": "10",
        "mode": "lazy",
        "seed": "0",
    }
    return kv


BUILTIN_DEFAULTS = {
    "dcdc": dcdc_defaults,
    "spiral": spiral_defaults,
}
