"""Multi-resolution grid covers of the global safe box and dense cell-set algebra.

A LayerStack holds L nested uniform grids over Y = [alpha, beta]. Layer 1 is
the finest; widths and sampling times double per layer, and the coarsest layer
must tile Y exactly so that layers nest 2-to-1 per dimension. Cell sets are
dense boolean masks over one layer's cells, indexed row-major in the dimension
order of the configuration.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

# Tolerance (in grid-step units) for snapping coordinates that are meant to
# lie exactly on a grid face but carry float noise.
_SNAP = 1e-9


def _snap_integers(t):
    r = np.rint(t)
    return np.where(np.abs(t - r) < _SNAP, r, t)


class CellSet:
    """Dense set of cells of one layer, backed by a bool array."""

    __slots__ = ("layer", "bits")

    def __init__(self, layer: int, bits: np.ndarray):
        self.layer = layer
        self.bits = bits

    # -- constructors -------------------------------------------------------

    @classmethod
    def empty(cls, layer, num_cells):
        return cls(layer, np.zeros(num_cells, dtype=bool))

    @classmethod
    def full(cls, layer, num_cells):
        return cls(layer, np.ones(num_cells, dtype=bool))

    @classmethod
    def from_indices(cls, layer, num_cells, indices):
        bits = np.zeros(num_cells, dtype=bool)
        bits[np.asarray(indices, dtype=np.int64)] = True
        return cls(layer, bits)

    # -- algebra ------------------------------------------------------------

    def _check(self, other: "CellSet"):
        if self.layer != other.layer or self.bits.size != other.bits.size:
            raise ValueError(
                f"cell-set layer mismatch: {self.layer}/{self.bits.size} vs "
                f"{other.layer}/{other.bits.size}")

    def __or__(self, other):
        self._check(other)
        return CellSet(self.layer, self.bits | other.bits)

    def __and__(self, other):
        self._check(other)
        return CellSet(self.layer, self.bits & other.bits)

    def __sub__(self, other):
        self._check(other)
        return CellSet(self.layer, self.bits & ~other.bits)

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        self._check(other)
        return bool(np.array_equal(self.bits, other.bits))

    def __ne__(self, other):
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq

    def __hash__(self):  # mutable content; identity hashing only
        return id(self)

    def issubset(self, other):
        self._check(other)
        return not bool(np.any(self.bits & ~other.bits))

    def __len__(self):
        return int(np.count_nonzero(self.bits))

    def is_empty(self):
        return not bool(self.bits.any())

    def contains(self, index):
        return bool(self.bits[index])

    def indices(self) -> np.ndarray:
        """Member cell indices in ascending order."""
        return np.flatnonzero(self.bits)

    def copy(self):
        return CellSet(self.layer, self.bits.copy())

    def __repr__(self):
        return f"CellSet(layer={self.layer}, size={len(self)}/{self.bits.size})"


class SafeRegion:
    """Target region: a closed box minus the open interiors of obstacle boxes."""

    def __init__(self, lo, hi, obstacles=()):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.lo > self.hi):
            raise ConfigError("safe-region box has lo > hi")
        self.obstacles = [(np.asarray(a, float), np.asarray(b, float))
                          for a, b in obstacles]
        for a, b in self.obstacles:
            if np.any(a > b):
                raise ConfigError("obstacle box has lo > hi")

    def contains(self, x) -> np.ndarray:
        """Membership test; x has shape (..., n), result shape (...)."""
        x = np.asarray(x, dtype=float)
        ok = np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        for a, b in self.obstacles:
            inside = np.all((x > a) & (x < b), axis=-1)
            ok &= ~inside
        return ok


class LayerStack:
    """L nested grids over Y = [alpha, beta] with widths eta_l = 2^(l-1) * eta1
    and sampling times tau_l = 2^(l-1) * tau1."""

    def __init__(self, alpha, beta, eta1, tau1, num_layers,
                 periodic: Optional[Sequence[Optional[float]]] = None):
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.eta1 = np.asarray(eta1, dtype=float)
        self.tau1 = float(tau1)
        self.num_layers = int(num_layers)
        self.dim = self.alpha.size

        if self.beta.size != self.dim or self.eta1.size != self.dim:
            raise ConfigError("alpha, beta, eta1 must have the same dimension")
        if np.any(self.eta1 <= 0):
            raise ConfigError("eta1 must be positive in every dimension")
        if self.tau1 <= 0:
            raise ConfigError("tau1 must be positive")
        if self.num_layers < 1:
            raise ConfigError("number of layers must be >= 1")
        if np.any(self.beta <= self.alpha):
            raise ConfigError("safe box must satisfy alpha < beta")

        span = self.beta - self.alpha
        counts = span / self.eta1
        rounded = np.rint(counts)
        if np.any(np.abs(counts - rounded) > 1e-6 * np.maximum(1.0, rounded)):
            raise ConfigError(
                f"(beta - alpha) = {span} is not an integer multiple of eta1 "
                f"= {self.eta1}")
        counts1 = rounded.astype(np.int64)
        ratio = 2 ** (self.num_layers - 1)
        if np.any(counts1 % ratio != 0):
            raise ConfigError(
                f"layer-1 cell counts {counts1} are not divisible by "
                f"2^(L-1) = {ratio}; the coarsest layer cannot tile the safe box")

        self.periodic = [None] * self.dim
        if periodic is not None:
            if len(periodic) != self.dim:
                raise ConfigError("periodic spec length must equal dimension")
            for i, p in enumerate(periodic):
                if p is None:
                    continue
                p = float(p)
                if p <= 0:
                    raise ConfigError(f"period in dimension {i} must be > 0")
                if abs(self.alpha[i]) > 1e-12:
                    raise ConfigError(
                        f"periodic dimension {i} must have alpha = 0")
                if abs(span[i] - p) > 1e-9 * p:
                    raise ConfigError(
                        f"periodic dimension {i}: box span {span[i]} must "
                        f"equal the period {p}")
                self.periodic[i] = p
        self.periodic_mask = np.array([p is not None for p in self.periodic])

        self._counts = [counts1 // (2 ** l) for l in range(self.num_layers)]
        self._eta = [self.eta1 * (2 ** l) for l in range(self.num_layers)]
        self._tau = [self.tau1 * (2 ** l) for l in range(self.num_layers)]

    # -- per-layer geometry --------------------------------------------------

    def _li(self, l):
        if not 1 <= l <= self.num_layers:
            raise ValueError(f"layer {l} out of range [1;{self.num_layers}]")
        return l - 1

    def counts(self, l) -> np.ndarray:
        return self._counts[self._li(l)]

    def eta(self, l) -> np.ndarray:
        return self._eta[self._li(l)]

    def tau(self, l) -> float:
        return self._tau[self._li(l)]

    def num_cells(self, l) -> int:
        return int(np.prod(self.counts(l)))

    def cell_volume(self, l) -> float:
        return float(np.prod(self.eta(l)))

    @property
    def layers(self):
        return range(1, self.num_layers + 1)

    def empty_set(self, l) -> CellSet:
        return CellSet.empty(l, self.num_cells(l))

    def full_set(self, l) -> CellSet:
        return CellSet.full(l, self.num_cells(l))

    def set_from_indices(self, l, indices) -> CellSet:
        return CellSet.from_indices(l, self.num_cells(l), indices)

    # -- points and cells ----------------------------------------------------

    def wrap_point(self, x) -> np.ndarray:
        """Wrap periodic coordinates into [0, p); other coordinates unchanged."""
        x = np.array(x, dtype=float, copy=True)
        for i, p in enumerate(self.periodic):
            if p is not None:
                x[..., i] = np.mod(x[..., i], p)
        return x

    def cell_of(self, x, l) -> Optional[int]:
        """Layer-l cell whose half-open box [c - eta/2, c + eta/2) contains x,
        or None when x lies outside [alpha, beta)."""
        idx = self.cells_of(np.asarray(x, float)[None, :], l)[0]
        return None if idx < 0 else int(idx)

    def cells_of(self, x, l) -> np.ndarray:
        """Vectorized cell_of; returns -1 where the point is outside."""
        li = self._li(l)
        x = self.wrap_point(np.asarray(x, dtype=float))
        t = _snap_integers((x - self.alpha) / self._eta[li])
        k = np.floor(t).astype(np.int64)
        counts = self._counts[li]
        ok = np.all((k >= 0) & (k < counts), axis=-1)
        k = np.clip(k, 0, counts - 1)
        lin = np.ravel_multi_index(tuple(k[..., i] for i in range(self.dim)),
                                   tuple(counts))
        return np.where(ok, lin, -1)

    def cell_centers(self, l, indices) -> np.ndarray:
        li = self._li(l)
        counts = self._counts[li]
        k = np.stack(np.unravel_index(np.asarray(indices, np.int64),
                                      tuple(counts)), axis=-1)
        return self.alpha + (k + 0.5) * self._eta[li]

    def cell_box(self, l, index):
        """Closed box (lo, hi) of one cell."""
        c = self.cell_centers(l, np.asarray([index]))[0]
        h = self.eta(l) / 2.0
        return c - h, c + h

    # -- box queries ---------------------------------------------------------

    def intersect_ranges(self, lo, hi, l):
        """Per-dimension index ranges of layer-l cells whose closed boxes meet
        the closed boxes [lo, hi] (batched: lo, hi of shape (B, n)).

        Returns (k_lo, k_hi, escapes): inclusive index ranges, already clamped
        in non-periodic dimensions (ranges may be empty, k_hi < k_lo), raw in
        periodic ones (wrap modulo counts when enumerating). escapes[b] is
        True iff box b is not contained in [alpha, beta].
        """
        li = self._li(l)
        eta = self._eta[li]
        counts = self._counts[li]
        t_lo = _snap_integers((np.asarray(lo, float) - self.alpha) / eta)
        t_hi = _snap_integers((np.asarray(hi, float) - self.alpha) / eta)
        k_lo = np.ceil(t_lo - 1.0).astype(np.int64)
        k_hi = np.floor(t_hi).astype(np.int64)

        out = (t_lo < 0.0) | (t_hi > counts)
        out &= ~self.periodic_mask
        escapes = np.any(out, axis=-1)

        nonper = ~self.periodic_mask
        k_lo = np.where(nonper, np.maximum(k_lo, 0), k_lo)
        k_hi = np.where(nonper, np.minimum(k_hi, counts - 1), k_hi)
        # a periodic box wider than the period would double-count cells
        width = k_hi - k_lo + 1
        k_hi = np.where(self.periodic_mask & (width >= counts),
                        k_lo + counts - 1, k_hi)
        return k_lo, k_hi, escapes

    def cells_intersecting(self, lo, hi, l):
        """All layer-l cells whose closed box intersects the closed box
        [lo, hi], plus an escape flag (True iff [lo, hi] is not inside Y)."""
        k_lo, k_hi, escapes = self.intersect_ranges(
            np.asarray(lo, float)[None, :], np.asarray(hi, float)[None, :], l)
        k_lo, k_hi = k_lo[0], k_hi[0]
        counts = self.counts(l)
        if np.any(k_hi < k_lo):
            return self.empty_set(l), bool(escapes[0])
        axes = []
        for i in range(self.dim):
            r = np.arange(k_lo[i], k_hi[i] + 1)
            if self.periodic[i] is not None:
                r = np.mod(r, counts[i])
            axes.append(r)
        mesh = np.meshgrid(*axes, indexing="ij")
        lin = np.ravel_multi_index(tuple(m.ravel() for m in mesh),
                                   tuple(counts))
        return self.set_from_indices(l, lin), bool(escapes[0])

    def cells_inside(self, lo, hi, l) -> CellSet:
        """Cells whose closed box is contained in the closed box [lo, hi]."""
        li = self._li(l)
        eta = self._eta[li]
        counts = self._counts[li]
        t_lo = _snap_integers((np.asarray(lo, float) - self.alpha) / eta)
        t_hi = _snap_integers((np.asarray(hi, float) - self.alpha) / eta)
        k_lo = np.maximum(np.ceil(t_lo).astype(np.int64), 0)
        k_hi = np.minimum(np.floor(t_hi).astype(np.int64) - 1, counts - 1)
        return self._range_set(k_lo, k_hi, l)

    def cells_overlapping(self, lo, hi, l) -> CellSet:
        """Cells whose closed box overlaps the box [lo, hi] with positive
        volume (face contact excluded)."""
        li = self._li(l)
        eta = self._eta[li]
        counts = self._counts[li]
        t_lo = _snap_integers((np.asarray(lo, float) - self.alpha) / eta)
        t_hi = _snap_integers((np.asarray(hi, float) - self.alpha) / eta)
        k_lo = np.maximum(np.floor(t_lo).astype(np.int64), 0)
        k_hi = np.minimum(np.ceil(t_hi).astype(np.int64) - 1, counts - 1)
        return self._range_set(k_lo, k_hi, l)

    def _range_set(self, k_lo, k_hi, l) -> CellSet:
        if np.any(k_hi < k_lo):
            return self.empty_set(l)
        counts = self.counts(l)
        mesh = np.meshgrid(*[np.arange(k_lo[i], k_hi[i] + 1)
                             for i in range(self.dim)], indexing="ij")
        lin = np.ravel_multi_index(tuple(m.ravel() for m in mesh),
                                   tuple(counts))
        return self.set_from_indices(l, lin)

    def box_aligned(self, lo, hi, l) -> bool:
        """True iff both corners lie on layer-l grid faces (within snapping)."""
        eta = self.eta(l)
        for v in (lo, hi):
            t = (np.asarray(v, float) - self.alpha) / eta
            if np.any(np.abs(t - np.rint(t)) >= _SNAP):
                return False
        return True

    # -- inter-layer transformer ----------------------------------------------

    def gamma(self, s: CellSet, target_layer: int) -> CellSet:
        """Map a cell set between layers, never over-approximating.

        Toward a finer layer the image is every subcell of every member cell;
        toward a coarser layer a cell is included only when all of its
        subcells are members. Same layer is the identity.
        """
        src = s.layer
        dst = self._li(target_layer) + 1  # validates range
        if src == dst:
            return s.copy()
        if dst < src:  # refine
            factor = 2 ** (src - dst)
            a = s.bits.reshape(tuple(self.counts(src)))
            for ax in range(self.dim):
                a = np.repeat(a, factor, axis=ax)
            return CellSet(dst, np.ascontiguousarray(a.reshape(-1)))
        # coarsen: all subcells must be present; realized as repeated halving
        # per axis, which reduces to fast vectorized ANDs of stride-2 slices
        a = s.bits.reshape(tuple(self.counts(src)))
        for _ in range(dst - src):
            for ax in range(self.dim):
                lo = [slice(None)] * self.dim
                hi = [slice(None)] * self.dim
                lo[ax] = slice(0, None, 2)
                hi[ax] = slice(1, None, 2)
                a = a[tuple(lo)] & a[tuple(hi)]
        return CellSet(dst, np.ascontiguousarray(a.reshape(-1)))

    # -- targets ---------------------------------------------------------------

    def target_cells(self, region: SafeRegion, l=1):
        """Under-approximate a safe region by layer-l cells: cells fully inside
        the target box minus cells overlapping any obstacle with positive
        volume. Also reports whether the approximation is exact."""
        t_hat = self.cells_inside(region.lo, region.hi, l)
        exact = self.box_aligned(region.lo, region.hi, l)
        for a, b in region.obstacles:
            t_hat = t_hat - self.cells_overlapping(a, b, l)
            exact = exact and self.box_aligned(a, b, l)
        return t_hat, exact
