"""Refinement of the layered abstract controller to the concrete sampled loop.

The quantizer maps a concrete state to the coarsest layer whose controller
domain contains a cell containing it; the loop then applies that layer's input
for that layer's sampling period, so trajectories are sampled non-uniformly.
Only sampling instants are monitored, by construction of the guarantees.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .dynamics import ControlSystem, integrate_perturbed
from .errors import DomainExitError
from .grid import LayerStack, SafeRegion
from .synthesis import MultiController


class QuantizerView:
    """Evaluation view of a controller: state -> (layer, cell)."""

    def __init__(self, controller: MultiController, stack: LayerStack):
        self.controller = controller
        self.stack = stack

    def quantize(self, x) -> Optional[Tuple[int, int]]:
        """Coarsest layer whose controller domain holds a cell containing x;
        None when x is covered by no layer."""
        for l in range(self.stack.num_layers, 0, -1):
            idx = self.stack.cell_of(x, l)
            if idx is not None and self.controller.domain(l).contains(idx):
                return l, idx
        return None

    def quantize_batch(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized quantize: returns (layers, cells) with layer 0 marking
        states outside every domain."""
        b = x.shape[0]
        layers = np.zeros(b, dtype=np.int64)
        cells = np.full(b, -1, dtype=np.int64)
        for l in range(self.stack.num_layers, 0, -1):
            open_rows = layers == 0
            if not open_rows.any():
                break
            idx = self.stack.cells_of(x[open_rows], l)
            dom = self.controller.choices[l - 1]
            hit = (idx >= 0) & (dom[np.clip(idx, 0, None)] >= 0)
            rows = np.flatnonzero(open_rows)[hit]
            layers[rows] = l
            cells[rows] = idx[hit]
        return layers, cells


def _disturbance(sys: ControlSystem, rng: np.random.Generator, shape):
    w = sys.disturbance
    if not w.any():
        return np.zeros(shape + (sys.dim,))
    return rng.uniform(-w, w, size=shape + (sys.dim,))


def step(view: QuantizerView, sys: ControlSystem, x, rng: np.random.Generator,
         substeps: int = 10):
    """One closed-loop step: quantize, apply the chosen input for the layer's
    sampling period under a sampled piecewise-constant disturbance.

    Raises DomainExitError when the successor no longer quantizes: that is a
    soundness violation, never an expected event.
    """
    q = view.quantize(x)
    if q is None:
        raise ValueError("state is outside the controller domain")
    l, cell = q
    u = view.controller.input_index(l, cell)
    w_seq = _disturbance(sys, rng, (substeps,))
    x_next = integrate_perturbed(sys, np.asarray(x, float), u,
                                 view.stack.tau(l), substeps, w_seq)
    if view.quantize(x_next) is None:
        raise DomainExitError(
            f"closed loop left the controller domain at {x_next} "
            f"(from layer {l}, cell {cell}, input {u})")
    return x_next, l, u


@dataclass
class Trajectory:
    """Sampled closed-loop run; sampling is non-uniform (per-step tau of the
    layer used)."""
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    layers: List[int] = field(default_factory=list)
    inputs: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.states)


@dataclass
class SimVerdict:
    safe: bool
    reason: str = ""


def simulate(view: QuantizerView, sys: ControlSystem, x0, num_steps: int,
             seed: int, substeps: int = 10,
             region: Optional[SafeRegion] = None):
    """Roll the closed loop num_steps times from x0. The verdict is safe iff
    every sampled state lies in the safe region and quantization never fails;
    domain exits are recorded in the verdict instead of aborting."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float)
    if view.quantize(x) is None:
        raise ValueError("initial state is outside the controller domain")
    traj = Trajectory(times=[0.0], states=[x.copy()], layers=[], inputs=[])
    safe = True
    reason = ""
    if region is not None and not region.contains(x):
        safe, reason = False, "initial state outside the safe set"
    t = 0.0
    for _ in range(num_steps):
        try:
            x, l, u = step(view, sys, x, rng, substeps)
        except DomainExitError as e:
            safe, reason = False, str(e)
            break
        t += view.stack.tau(l)
        traj.times.append(t)
        traj.states.append(x.copy())
        traj.layers.append(l)
        traj.inputs.append(u)
        if region is not None and not region.contains(x):
            safe = False
            reason = reason or f"left the safe set at t={t}"
    return traj, SimVerdict(safe=safe, reason=reason)


@dataclass
class BatchSummary:
    rollouts: int
    steps: int
    violations: int
    domain_exits: int
    layer_usage: List[int]
    failures: List[str] = field(default_factory=list)

    @property
    def all_safe(self):
        return self.violations == 0 and self.domain_exits == 0


def _simulate_chunk(view, sys, x0s, seeds, num_steps, substeps, region):
    """Lockstep rollout of one chunk; per-rollout RNG streams keep results
    independent of chunking."""
    stack = view.stack
    b = x0s.shape[0]
    x = x0s.copy()
    gens = [np.random.default_rng(s) for s in seeds]
    alive = np.ones(b, dtype=bool)
    violated = np.zeros(b, dtype=bool)
    exited = np.zeros(b, dtype=bool)
    layer_usage = [0] * stack.num_layers

    if region is not None:
        violated |= ~region.contains(x)
    for _ in range(num_steps):
        if not alive.any():
            break
        layers, cells = view.quantize_batch(x[alive])
        rows = np.flatnonzero(alive)
        fresh_exit = rows[layers == 0]
        exited[fresh_exit] = True
        alive[fresh_exit] = False
        for l in range(1, stack.num_layers + 1):
            sel = rows[layers == l]
            if sel.size == 0:
                continue
            layer_usage[l - 1] += sel.size
            u_of = view.controller.choices[l - 1][cells[layers == l]]
            w_seq = np.stack([_disturbance(sys, gens[i], (substeps,))
                              for i in sel]) if sys.disturbance.any() else \
                np.zeros((sel.size, substeps, sys.dim))
            for u in np.unique(u_of):
                pick = sel[u_of == u]
                x[pick] = integrate_perturbed(
                    sys, x[pick], int(u), stack.tau(l), substeps,
                    w_seq[u_of == u])
        if region is not None:
            violated[rows] |= ~region.contains(x[rows])
    return violated, exited, layer_usage


def simulate_batch(view: QuantizerView, sys: ControlSystem, x0s: np.ndarray,
                   num_steps: int, seed: int, substeps: int = 10,
                   region: Optional[SafeRegion] = None,
                   threads: int = 1) -> BatchSummary:
    """Batch rollouts with vectorized stepping, grouped per layer each step.
    Every rollout owns an RNG stream spawned from `seed`, so results do not
    depend on the thread count."""
    x0s = np.asarray(x0s, dtype=float)
    n = x0s.shape[0]
    seeds = np.random.SeedSequence(seed).spawn(n)
    chunks = max(1, min(threads, n))
    bounds = np.linspace(0, n, chunks + 1).astype(int)
    jobs = [(x0s[a:b], seeds[a:b]) for a, b in zip(bounds[:-1], bounds[1:])
            if b > a]

    def run(job):
        xs, ss = job
        return _simulate_chunk(view, sys, xs, ss, num_steps, substeps, region)

    if len(jobs) == 1:
        results = [run(jobs[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(run, jobs))

    violations = sum(int(v.sum()) for v, _, _ in results)
    exits = sum(int(e.sum()) for _, e, _ in results)
    usage = [sum(r[2][i] for r in results) for i in range(view.stack.num_layers)]
    failures = []
    if violations:
        failures.append(f"{violations} rollouts left the safe set")
    if exits:
        failures.append(f"{exits} rollouts left the controller domain")
    return BatchSummary(rollouts=n, steps=num_steps, violations=violations,
                        domain_exits=exits, layer_usage=usage,
                        failures=failures)


def write_trajectory_csv(traj: Trajectory, path):
    """One row per sample: time, state components, layer used, input applied.
    The initial state carries layer/input of the first step (blank if none)."""
    dim = traj.states[0].size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"x{i}" for i in range(dim)]
                   + ["layer", "input_index"])
        for k, (t, x) in enumerate(zip(traj.times, traj.states)):
            if k < len(traj.layers):
                layer, u = traj.layers[k], traj.inputs[k]
                w.writerow([repr(t)] + [repr(float(v)) for v in x]
                           + [layer, u])
            else:
                w.writerow([repr(t)] + [repr(float(v)) for v in x] + ["", ""])
