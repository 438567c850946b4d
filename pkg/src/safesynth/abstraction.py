"""Lazy per-layer abstract transition function.

Transitions are computed on demand, in whole-frontier batches, and cached
forever: once an entry (cell, input) is Computed it never changes. Successor
sets are the layer cells whose closed boxes intersect the one-step reach box;
anything outside the global safe box is summarized by a single leaves_Y flag
instead of materializing boundary cells.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .dynamics import ControlSystem, reach_box
from .errors import NumericalBlowupError
from .grid import CellSet, LayerStack


@dataclass
class ExplorationStats:
    """Monotone per-run counters: computed (cell, input) pairs and wall-clock
    exploration time per layer, plus the fixpoint iteration count."""
    pairs: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    iterations: int = 0

    @classmethod
    def for_layers(cls, num_layers):
        return cls(pairs=[0] * num_layers, seconds=[0.0] * num_layers)

    @property
    def total_pairs(self):
        return sum(self.pairs)

    @property
    def total_seconds(self):
        return sum(self.seconds)


class _LayerCache:
    """Dense tri-state cache for one layer, input-major. Successor indices
    live in one growing buffer addressed by per-entry (start, length)."""

    def __init__(self, num_cells, num_inputs):
        self.num_cells = num_cells
        self.num_inputs = num_inputs
        self.computed = np.zeros((num_inputs, num_cells), dtype=bool)
        self.leaves = np.zeros((num_inputs, num_cells), dtype=bool)
        self.start = np.full((num_inputs, num_cells), -1, dtype=np.int64)
        self.length = np.zeros((num_inputs, num_cells), dtype=np.int64)
        self.buf = np.zeros(1024, dtype=np.int64)
        self.total = 0
        self._eligible = [None] * num_inputs

    def flat_data(self):
        return self.buf[:self.total]

    def eligible(self, u):
        """Entries that can ever certify: Computed, stay in Y, nonempty."""
        if self._eligible[u] is None:
            self._eligible[u] = (self.computed[u] & ~self.leaves[u]
                                 & (self.length[u] > 0))
        return self._eligible[u]

    def append(self, u, cells, data, lengths):
        offsets = np.zeros(len(lengths), dtype=np.int64)
        np.cumsum(lengths[:-1], out=offsets[1:])
        self.start[u, cells] = self.total + offsets
        self.length[u, cells] = lengths
        need = self.total + data.size
        if need > self.buf.size:
            grown = np.zeros(max(need, 2 * self.buf.size), dtype=np.int64)
            grown[:self.total] = self.buf[:self.total]
            self.buf = grown
        self.buf[self.total:need] = data
        self.total = need
        self._eligible[u] = None


class TransitionCache:
    """Per-layer, per-(cell, input) abstract transition store."""

    def __init__(self, stack: LayerStack, sys: ControlSystem):
        self.stack = stack
        self.num_inputs = sys.num_inputs
        self._layers = [_LayerCache(stack.num_cells(l), sys.num_inputs)
                        for l in stack.layers]
        self.stats = ExplorationStats.for_layers(stack.num_layers)

    def _lc(self, l) -> _LayerCache:
        return self._layers[l - 1]

    # -- exploration -----------------------------------------------------------

    def explore(self, sys: ControlSystem, stack: LayerStack, cells: CellSet,
                l: int, substeps: int = 10):
        """Compute transitions for every (cell in `cells`, input) pair that is
        still Unexplored; Computed entries are never touched."""
        if cells.is_empty():
            return
        t0 = time.perf_counter()
        lc = self._lc(l)
        idx_all = cells.indices()
        new_pairs = 0
        for u in range(self.num_inputs):
            todo = idx_all[~lc.computed[u, idx_all]]
            if todo.size == 0:
                continue
            centers = stack.cell_centers(l, todo)
            try:
                rb = reach_box(sys, centers, stack.eta(l) / 2.0, u,
                               stack.tau(l), substeps)
            except NumericalBlowupError as e:
                if e.bad_index is not None:
                    raise NumericalBlowupError(
                        f"{e} [layer {l}, cell {int(todo[e.bad_index])}, "
                        f"input {u}]", bad_index=e.bad_index) from e
                raise
            lo = rb.center - rb.radius
            hi = rb.center + rb.radius
            data, lengths, escapes = self._successor_lists(stack, lo, hi, l)
            lc.computed[u, todo] = True
            lc.leaves[u, todo] = escapes
            lc.append(u, todo, data, lengths)
            new_pairs += todo.size
        self.stats.pairs[l - 1] += new_pairs
        self.stats.seconds[l - 1] += time.perf_counter() - t0

    @staticmethod
    def _successor_lists(stack, lo, hi, l):
        """Vectorized successor-cell enumeration for a batch of boxes.

        Returns (data, lengths, escapes): per-box sorted cell indices
        concatenated in batch order.
        """
        k_lo, k_hi, escapes = stack.intersect_ranges(lo, hi, l)
        counts = stack.counts(l)
        strides = np.ones(stack.dim, dtype=np.int64)
        for d in range(stack.dim - 2, -1, -1):
            strides[d] = strides[d + 1] * counts[d + 1]

        widths = np.maximum(k_hi - k_lo + 1, 0)
        empty = np.any(widths == 0, axis=-1)
        lengths = np.where(empty, 0, widths.prod(axis=-1)).astype(np.int64)
        offsets = np.zeros(len(lengths), dtype=np.int64)
        np.cumsum(lengths[:-1], out=offsets[1:])
        data = np.empty(int(lengths.sum()), dtype=np.int64)

        live = ~empty
        if live.any():
            # group rows by width tuple; scalar keys beat np.unique(axis=0)
            base = int(widths.max()) + 1
            keys = np.zeros(int(live.sum()), dtype=np.int64)
            for d in range(stack.dim):
                keys = keys * base + widths[live, d]
            uniq_keys, inverse = np.unique(keys, return_inverse=True)
            live_rows = np.flatnonzero(live)
            for g in range(uniq_keys.size):
                rows = live_rows[inverse == g]
                w = widths[rows[0]]
                lin = np.zeros((rows.size,) + tuple(int(v) for v in w),
                               dtype=np.int64)
                for d in range(stack.dim):
                    r = k_lo[rows, d][:, None] + np.arange(int(w[d]))[None, :]
                    if stack.periodic[d] is not None:
                        r = np.mod(r, counts[d])
                    shape = [rows.size] + [1] * stack.dim
                    shape[1 + d] = int(w[d])
                    lin += r.reshape(shape) * strides[d]
                flat = lin.reshape(rows.size, -1)
                flat.sort(axis=1)
                pos = offsets[rows][:, None] + np.arange(flat.shape[1])[None, :]
                data[pos.reshape(-1)] = flat.reshape(-1)
        return data, lengths, escapes

    def insert(self, l, cell, u, successors, leaves: bool):
        """Directly install one Computed entry (synthetic systems, tests)."""
        lc = self._lc(l)
        if lc.computed[u, cell]:
            raise ValueError(f"entry (layer {l}, cell {cell}, input {u}) "
                             "is already computed")
        succ = np.unique(np.asarray(successors, dtype=np.int64))
        lc.computed[u, cell] = True
        lc.leaves[u, cell] = bool(leaves)
        lc.append(u, np.asarray([cell]), succ,
                  np.asarray([succ.size], dtype=np.int64))
        self.stats.pairs[l - 1] += 1

    # -- queries ---------------------------------------------------------------

    def successors(self, l, cell, u) -> Optional[Tuple[np.ndarray, bool]]:
        """Pure lookup: None while Unexplored, else (successor cell indices,
        leaves_Y). Never triggers computation."""
        lc = self._lc(l)
        if not lc.computed[u, cell]:
            return None
        s, n = lc.start[u, cell], lc.length[u, cell]
        return lc.flat_data()[s:s + n].copy(), bool(lc.leaves[u, cell])

    def computed_pairs(self, l) -> int:
        return int(self._lc(l).computed.sum())

    def computed_mask(self, l) -> np.ndarray:
        """Copy of the per-(input, cell) Computed flags of one layer."""
        return self._lc(l).computed.copy()

    def explored_cells(self, l) -> CellSet:
        """Cells with at least one Computed input."""
        return CellSet(l, self._lc(l).computed.any(axis=0))

    def certified(self, l, target_bits: np.ndarray,
                  restrict_bits: Optional[np.ndarray] = None,
                  only_input: Optional[int] = None) -> np.ndarray:
        """Cells having some input whose entry is Computed, does not leave Y,
        and whose (nonempty) successor set lies inside target_bits.

        Unexplored entries never certify. restrict_bits limits the scan;
        only_input checks a single input instead of an existential sweep.
        """
        lc = self._lc(l)
        data = lc.flat_data()
        out = np.zeros(lc.num_cells, dtype=bool)
        inputs = range(self.num_inputs) if only_input is None else [only_input]
        for u in inputs:
            cand = lc.eligible(u) & ~out
            if restrict_bits is not None:
                cand &= restrict_bits
            cells = np.flatnonzero(cand)
            if cells.size == 0:
                continue
            starts = lc.start[u, cells]
            lens = lc.length[u, cells]
            ptr = np.zeros(lens.size, dtype=np.int64)
            np.cumsum(lens[:-1], out=ptr[1:])
            total = int(lens.sum())
            pos = np.repeat(starts - ptr, lens) + np.arange(total)
            inside = target_bits[data[pos]]
            ok = np.logical_and.reduceat(inside, ptr)
            out[cells[ok]] = True
        return out

    # -- diagnostics -------------------------------------------------------------

    def dump(self, fh):
        """Text dump, one line per Computed entry: layer, cell index, input
        index, successor indices, leaves flag."""
        for l in self.stack.layers:
            lc = self._lc(l)
            data = lc.flat_data()
            for cell in np.flatnonzero(lc.computed.any(axis=0)):
                for u in range(self.num_inputs):
                    if not lc.computed[u, cell]:
                        continue
                    s, n = lc.start[u, cell], lc.length[u, cell]
                    succ = " ".join(str(int(v)) for v in data[s:s + n])
                    parts = [str(l), str(int(cell)), str(u)]
                    if succ:
                        parts.append(succ)
                    parts.append(str(int(lc.leaves[u, cell])))
                    fh.write(" ".join(parts) + "\n")
