"""Continuous-time control systems and reachable-set over-approximation.

The one-step image of a grid cell under a constant input is over-approximated
by a box: its center is the fixed-step RK4 image of the cell center under the
nominal vector field, and its half-widths follow the monotone linear radius
dynamics rdot = L_u r + w, where L_u is a user-supplied per-input growth
matrix (non-negative off-diagonal) and w bounds the additive disturbance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalBlowupError


class ControlSystem:
    """Sampled control system with a finite input set.

    rhs(x, u) must accept states of shape (..., n) and a single input vector,
    and broadcast accordingly; all built-in systems do.
    """

    def __init__(self, dim: int, inputs, rhs: Callable, disturbance=None,
                 growth_matrices=None,
                 periodic: Optional[Sequence[Optional[float]]] = None,
                 name: str = ""):
        self.dim = int(dim)
        self.inputs = [np.atleast_1d(np.asarray(u, dtype=float)) for u in inputs]
        if not self.inputs:
            raise ConfigError("input set must be nonempty")
        self.rhs = rhs
        self.name = name

        if disturbance is None:
            disturbance = np.zeros(self.dim)
        self.disturbance = np.asarray(disturbance, dtype=float)
        if self.disturbance.size != self.dim or np.any(self.disturbance < 0):
            raise ConfigError("disturbance bound must be >= 0, one per dimension")

        if growth_matrices is None:
            raise ConfigError("a growth matrix per input is required")
        self.growth_matrices = [np.asarray(m, dtype=float) for m in growth_matrices]
        if len(self.growth_matrices) == 1 and len(self.inputs) > 1:
            self.growth_matrices = self.growth_matrices * len(self.inputs)
        if len(self.growth_matrices) != len(self.inputs):
            raise ConfigError("need one growth matrix per input (or one shared)")
        for m in self.growth_matrices:
            if m.shape != (self.dim, self.dim):
                raise ConfigError(f"growth matrix must be {self.dim}x{self.dim}")
            off = m - np.diag(np.diag(m))
            if np.any(off < 0):
                raise ConfigError("growth matrix off-diagonal entries must be >= 0")

        self.periodic = list(periodic) if periodic is not None else [None] * self.dim
        if len(self.periodic) != self.dim:
            raise ConfigError("periodic spec length must equal dimension")
        for p in self.periodic:
            if p is not None and p <= 0:
                raise ConfigError("periods must be positive")

    @property
    def num_inputs(self):
        return len(self.inputs)

    def wrap(self, x):
        """Wrap periodic state components into [0, p)."""
        for i, p in enumerate(self.periodic):
            if p is not None:
                x[..., i] = np.mod(x[..., i], p)
        return x


@dataclass
class ReachBox:
    """Box over-approximation of the one-step reachable set of a cell:
    [center - radius, center + radius]. Batched centers have shape (B, n)."""
    center: np.ndarray
    radius: np.ndarray


def _rk4(deriv, x0, tau, substeps):
    h = tau / substeps
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(substeps):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _check_finite(x, what, u_index):
    finite = np.isfinite(x)
    if finite.all():
        return x
    bad = np.flatnonzero(~finite.reshape(-1, x.shape[-1]).all(axis=-1))
    raise NumericalBlowupError(
        f"numerical blow-up in {what} under input {u_index} "
        f"(first offending batch row {bad[0]})",
        bad_index=int(bad[0]))


def integrate_nominal(sys: ControlSystem, x0, u_index: int, tau: float,
                      substeps: int = 10) -> np.ndarray:
    """RK4 image of x0 under the nominal field for time tau; accepts a single
    state (n,) or a batch (B, n). Periodic components are wrapped into [0, p)
    after integration."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = sys.inputs[u_index]
    x = _rk4(lambda y: sys.rhs(y, u), x0, tau, substeps)
    _check_finite(x, "nominal integration", u_index)
    return sys.wrap(x)


def integrate_perturbed(sys: ControlSystem, x0, u_index: int, tau: float,
                        substeps: int, w_values: np.ndarray) -> np.ndarray:
    """RK4 image under the nominal field plus a piecewise-constant additive
    disturbance, one value per substep: w_values has shape (substeps, n) or
    (B, substeps, n) for a batch x0 of shape (B, n)."""
    u = sys.inputs[u_index]
    h = tau / substeps
    x = np.asarray(x0, dtype=float).copy()
    w_values = np.asarray(w_values, dtype=float)
    for k in range(substeps):
        w = w_values[..., k, :]
        deriv = lambda y: sys.rhs(y, u) + w
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(x, "perturbed integration", u_index)
    return sys.wrap(x)


def growth_radius(sys: ControlSystem, r0, u_index: int, tau: float,
                  substeps: int = 10) -> np.ndarray:
    """RK4 solution of the radius dynamics rdot = L_u r + w at time tau.

    The system is monotone (non-negative off-diagonals, w >= 0), so the result
    is monotone in r0 and in tau; tiny negative float residue is clipped.
    """
    r0 = np.asarray(r0, dtype=float)
    if np.any(r0 < 0):
        raise ValueError("initial radius must be >= 0")
    mat = sys.growth_matrices[u_index]
    w = sys.disturbance
    r = _rk4(lambda r: r @ mat.T + w, r0, tau, substeps)
    _check_finite(r, "radius integration", u_index)
    return np.maximum(r, 0.0)


def reach_box(sys: ControlSystem, cell_center, cell_half_width, u_index: int,
              tau: float, substeps: int = 10) -> ReachBox:
    """Over-approximate the time-tau reachable set of the cell
    [center - half_width, center + half_width] under input u_index.

    cell_center may be batched (B, n); the radius is shared across the batch
    because all cells of one layer have the same half-width.
    """
    half = np.asarray(cell_half_width, dtype=float)
    if np.any(half <= 0):
        raise ValueError("cell half-width must be positive")
    center = integrate_nominal(sys, cell_center, u_index, tau, substeps)
    radius = growth_radius(sys, half, u_index, tau, substeps)
    for i, p in enumerate(sys.periodic):
        if p is not None and radius[..., i].max() >= p / 2.0:
            raise NumericalBlowupError(
                f"reach radius {radius[..., i].max()} in periodic dimension "
                f"{i} exceeds half the period {p / 2.0}")
    return ReachBox(center=center, radius=radius)
