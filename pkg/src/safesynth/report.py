"""Run reports: exploration/synthesis statistics and domain measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

from .grid import LayerStack
from .synthesis import SynthesisResult


@dataclass
class LayerReport:
    layer: int
    explored_pairs: int
    explore_seconds: float
    domain_cells: int
    domain_volume: float


@dataclass
class RunReport:
    name: str
    mode: str
    num_layers: int
    iterations: int
    total_seconds: float
    abstraction_seconds: float
    synthesis_seconds: float
    layers: List[LayerReport] = field(default_factory=list)
    winning_cells: int = 0
    winning_volume: float = 0.0
    domain_volume_sum: float = 0.0


def build_report(name: str, result: SynthesisResult,
                 stack: LayerStack) -> RunReport:
    rep = RunReport(
        name=name, mode=result.mode, num_layers=stack.num_layers,
        iterations=result.stats.iterations,
        total_seconds=result.seconds,
        abstraction_seconds=result.stats.total_seconds,
        synthesis_seconds=result.synthesis_seconds)
    for l in stack.layers:
        dom = result.controller.domain(l)
        rep.layers.append(LayerReport(
            layer=l,
            explored_pairs=result.stats.pairs[l - 1],
            explore_seconds=result.stats.seconds[l - 1],
            domain_cells=len(dom),
            domain_volume=len(dom) * stack.cell_volume(l)))
    rep.winning_cells = len(result.winning)
    rep.winning_volume = rep.winning_cells * stack.cell_volume(1)
    # per-layer volumes may overlap at layer-1 resolution; the layer-1 union
    # (= winning volume) is the canonical measure, the sum is reported anyway
    rep.domain_volume_sum = sum(lr.domain_volume for lr in rep.layers)
    return rep


def render_report(rep: RunReport) -> str:
    lines = [
        "run-report",
        f"name {rep.name}",
        f"mode {rep.mode}",
        f"num-layers {rep.num_layers}",
        f"iterations {rep.iterations}",
        f"total-seconds {rep.total_seconds:.3f}",
        f"abstraction-seconds {rep.abstraction_seconds:.3f}",
        f"synthesis-seconds {rep.synthesis_seconds:.3f}",
    ]
    for lr in rep.layers:
        lines.append(
            f"layer {lr.layer} explored-pairs {lr.explored_pairs} "
            f"explore-seconds {lr.explore_seconds:.3f} "
            f"domain-cells {lr.domain_cells} "
            f"domain-volume {lr.domain_volume:.6g}")
    lines.append(f"winning-cells {rep.winning_cells}")
    lines.append(f"winning-volume {rep.winning_volume:.6g}")
    lines.append(f"domain-volume-sum {rep.domain_volume_sum:.6g}")
    return "\n".join(lines) + "\n"


def render_compare_table(reports: List[RunReport]) -> str:
    head = (f"{'mode':<10} {'L':>2} {'abstr-s':>9} {'synth-s':>9} "
            f"{'pairs':>10} {'winning':>9} {'iters':>6}")
    rows = [head, "-" * len(head)]
    for r in reports:
        pairs = sum(lr.explored_pairs for lr in r.layers)
        rows.append(
            f"{r.mode:<10} {r.num_layers:>2} {r.abstraction_seconds:>9.3f} "
            f"{r.synthesis_seconds:>9.3f} {pairs:>10} {r.winning_cells:>9} "
            f"{r.iterations:>6}")
    return "\n".join(rows) + "\n"


def write_compare_csv(path, reports: List[RunReport]):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "num_layers", "abstraction_seconds",
                    "synthesis_seconds", "total_seconds", "explored_pairs",
                    "winning_cells", "iterations"])
        for r in reports:
            w.writerow([r.mode, r.num_layers,
                        f"{r.abstraction_seconds:.6f}",
                        f"{r.synthesis_seconds:.6f}",
                        f"{r.total_seconds:.6f}",
                        sum(lr.explored_pairs for lr in r.layers),
                        r.winning_cells, r.iterations])
