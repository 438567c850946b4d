"""Safety fixpoints over the layered abstraction.

The core loop interleaves one controllable-predecessor step per layer, coarse
to fine, accumulating certified cells at layer-1 resolution, and repeats until
that layer-1 set stabilizes. In lazy mode each layer pass first explores only
the frontier the fixpoint actually needs; in eager mode everything inside the
target is explored up front and the per-pass exploration is a no-op that is
skipped. Both modes provably produce the same winning set, and the suite
treats any divergence as a hard failure.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .abstraction import ExplorationStats, TransitionCache
from .dynamics import ControlSystem
from .errors import PropertyViolationError
from .grid import CellSet, LayerStack, SafeRegion


def cpre(cache: TransitionCache, upsilon: CellSet, l: int,
         restrict: Optional[CellSet] = None) -> CellSet:
    """Controllable predecessor: cells with some input whose Computed,
    Y-interior successor set lies inside `upsilon`.

    Unexplored inputs cannot certify a cell; an (anomalous) empty successor
    set fails as well. `restrict` optionally limits the sweep to a known
    superset of the result, which the fixpoint loops exploit.
    """
    bits = cache.certified(l, upsilon.bits,
                           restrict_bits=None if restrict is None else restrict.bits)
    return CellSet(l, bits)


@dataclass
class MultiController:
    """Per-layer controller domains with one chosen input per domain cell.

    choices[l-1][cell] is the input index, or -1 outside the domain. The
    deterministic selection is the lowest valid input index; the permissive
    set of all valid inputs remains recoverable from the transition cache.
    """
    domains: List[CellSet]
    choices: List[np.ndarray]

    @property
    def num_layers(self):
        return len(self.domains)

    def domain(self, l) -> CellSet:
        return self.domains[l - 1]

    def input_index(self, l, cell) -> int:
        u = int(self.choices[l - 1][cell])
        if u < 0:
            raise KeyError(f"cell {cell} not in layer-{l} controller domain")
        return u

    def total_cells(self):
        return sum(len(d) for d in self.domains)

    def validate(self, cache: TransitionCache, stack: LayerStack,
                 winning: CellSet):
        """Re-check every chosen input against the cache: Computed, stays in Y,
        successors inside the winning set lifted to the cell's layer."""
        for l in stack.layers:
            target = stack.gamma(winning, l)
            for cell in self.domains[l - 1].indices():
                u = self.input_index(l, int(cell))
                got = cache.successors(l, int(cell), u)
                if got is None:
                    raise PropertyViolationError(
                        f"layer {l} cell {cell}: chosen input {u} unexplored")
                succ, leaves = got
                if leaves or succ.size == 0 or not target.bits[succ].all():
                    raise PropertyViolationError(
                        f"layer {l} cell {cell}: input {u} violates the "
                        f"controller condition")


@dataclass
class SynthesisResult:
    """Outcome of a synthesis run. `winning` is the layer-1 aggregation of all
    per-layer controller domains; `trace` lists (iteration, layer, |W|)."""
    winning: CellSet
    controller: MultiController
    stats: ExplorationStats
    trace: List[tuple]
    cache: TransitionCache
    seconds: float = 0.0
    mode: str = ""
    debug_sets: Optional[list] = None

    @property
    def synthesis_seconds(self):
        return max(self.seconds - self.stats.total_seconds, 0.0)


def extract_controller(cache: TransitionCache, stack: LayerStack,
                       winning: CellSet,
                       final_w: List[CellSet]) -> MultiController:
    """Pick, for every domain cell, the lowest input index whose successors
    stay inside the winning set lifted to that layer."""
    domains, choices = [], []
    for l in stack.layers:
        dom = final_w[l - 1]
        target_bits = stack.gamma(winning, l).bits
        choice = np.full(stack.num_cells(l), -1, dtype=np.int64)
        remaining = dom.bits.copy()
        for u in range(cache.num_inputs):
            if not remaining.any():
                break
            ok = cache.certified(l, target_bits, restrict_bits=remaining,
                                 only_input=u)
            choice[ok] = u
            remaining &= ~ok
        if remaining.any():
            # impossible when the fixpoint terminated correctly
            raise PropertyViolationError(
                f"no valid input for {int(remaining.sum())} layer-{l} domain "
                f"cells; fixpoint is inconsistent")
        domains.append(dom.copy())
        choices.append(choice)
    return MultiController(domains=domains, choices=choices)


def safe_iteration(mode: str, cache: TransitionCache, sys: ControlSystem,
                   stack: LayerStack, t_hat_1: CellSet, substeps: int = 10,
                   keep_sets: bool = False) -> SynthesisResult:
    """Interleaved multi-layer safety fixpoint (recursion flattened to a
    double loop: outer iterations, inner layers coarse-to-fine).

    Per iteration and layer: lift the current layer-1 certified set, in lazy
    mode explore the not-yet-covered part of it, take one controllable-
    predecessor step, and fold the result back to layer 1. Terminates when an
    iteration leaves the layer-1 set unchanged; monotonicity of that sequence
    is asserted on every pass.
    """
    if mode not in ("lazy", "eager"):
        raise ValueError(f"unknown mode {mode!r}")
    if t_hat_1.layer != 1:
        raise ValueError("target set must live on layer 1")
    t0 = time.perf_counter()
    upsilon = t_hat_1.copy()
    trace = []
    debug_sets = [] if keep_sets else None
    final_w = None
    while True:
        i = cache.stats.iterations + 1
        ups_prime = stack.empty_set(1)
        w_layers = [None] * stack.num_layers
        for l in range(stack.num_layers, 0, -1):
            lifted = stack.gamma(upsilon, l)
            if mode == "lazy":
                frontier = lifted - stack.gamma(ups_prime, l)
                cache.explore(sys, stack, frontier, l, substeps)
            w = cpre(cache, lifted, l, restrict=lifted) & lifted
            w_layers[l - 1] = w
            ups_prime = ups_prime | stack.gamma(w, 1)
            trace.append((i, l, len(w)))
            if keep_sets:
                debug_sets.append((i, l, w.copy()))
        if not ups_prime.issubset(upsilon):
            raise PropertyViolationError(
                f"fixpoint monotonicity violated at iteration {i}: the new "
                f"layer-1 set is not contained in the previous one")
        cache.stats.iterations = i
        if ups_prime == upsilon:
            final_w = w_layers
            break
        upsilon = ups_prime

    controller = extract_controller(cache, stack, upsilon, final_w)
    agg = stack.empty_set(1)
    for l in stack.layers:
        agg = agg | stack.gamma(controller.domain(l), 1)
    if agg != upsilon:
        raise PropertyViolationError(
            "winning set does not match the aggregated controller domains")
    return SynthesisResult(winning=upsilon, controller=controller,
                           stats=cache.stats, trace=trace, cache=cache,
                           seconds=time.perf_counter() - t0, mode=mode,
                           debug_sets=debug_sets)


def lazy_safe(sys: ControlSystem, stack: LayerStack, region: SafeRegion,
              substeps: int = 10, cache: Optional[TransitionCache] = None,
              keep_sets: bool = False) -> SynthesisResult:
    """Fixpoint with on-the-fly exploration of exactly the frontier each
    iteration demands."""
    cache = cache or TransitionCache(stack, sys)
    t_hat, _ = stack.target_cells(region, 1)
    result = safe_iteration("lazy", cache, sys, stack, t_hat, substeps,
                            keep_sets)
    result.mode = "lazy"
    return result


def eager_safe(sys: ControlSystem, stack: LayerStack, region: SafeRegion,
               substeps: int = 10, cache: Optional[TransitionCache] = None,
               keep_sets: bool = False) -> SynthesisResult:
    """Fixpoint with full up-front exploration of the lifted target at every
    layer."""
    cache = cache or TransitionCache(stack, sys)
    t_hat, _ = stack.target_cells(region, 1)
    t0 = time.perf_counter()
    for l in stack.layers:
        cache.explore(sys, stack, stack.gamma(t_hat, l), l, substeps)
    result = safe_iteration("eager", cache, sys, stack, t_hat, substeps,
                            keep_sets)
    result.mode = "eager"
    result.seconds = time.perf_counter() - t0  # includes pre-exploration
    return result


def single_layer_safe(cache: TransitionCache, sys: ControlSystem,
                      stack: LayerStack, t_hat: CellSet, l: int,
                      substeps: int = 10):
    """Classic one-layer safety fixpoint: W0 = t_hat, W(i+1) = CPre(Wi) & t_hat
    until stable. Returns the fixpoint set and a single-layer controller
    (inputs chosen so successors stay inside the fixpoint set itself)."""
    cache.explore(sys, stack, t_hat, l, substeps)
    w = t_hat.copy()
    n = 0  # counts N with W^N = W^(N+1)
    while True:
        w_next = cpre(cache, w, l, restrict=w) & t_hat
        if w_next == w:
            break
        if not w_next.issubset(w):
            raise PropertyViolationError("single-layer fixpoint grew")
        w = w_next
        n += 1
    cache.stats.iterations = max(cache.stats.iterations, n)

    domains = [stack.empty_set(k) for k in stack.layers]
    choices = [np.full(stack.num_cells(k), -1, dtype=np.int64)
               for k in stack.layers]
    choice = choices[l - 1]
    remaining = w.bits.copy()
    for u in range(cache.num_inputs):
        if not remaining.any():
            break
        ok = cache.certified(l, w.bits, restrict_bits=remaining, only_input=u)
        choice[ok] = u
        remaining &= ~ok
    if remaining.any():
        raise PropertyViolationError(
            f"no valid input for {int(remaining.sum())} cells of the "
            f"single-layer fixpoint")
    domains[l - 1] = w.copy()
    return w, MultiController(domains=domains, choices=choices)


def single_layer_result(sys: ControlSystem, stack: LayerStack,
                        region: SafeRegion, l: int, substeps: int = 10,
                        cache: Optional[TransitionCache] = None) -> SynthesisResult:
    """Run the single-layer fixpoint at layer l, packaged like the multi-layer
    modes (winning set lifted to layer 1)."""
    cache = cache or TransitionCache(stack, sys)
    t_hat, _ = stack.target_cells(region, l)
    t0 = time.perf_counter()
    w, controller = single_layer_safe(cache, sys, stack, t_hat, l, substeps)
    winning = stack.gamma(w, 1)
    return SynthesisResult(winning=winning, controller=controller,
                           stats=cache.stats, trace=[], cache=cache,
                           seconds=time.perf_counter() - t0,
                           mode=f"single:{l}")
