"""Command-line front end.

Subcommands: synth, compare, simulate, export-domain. Exit codes: 0 success,
1 configuration/validation error, 2 numerical error, 3 property violation
(lazy/eager divergence or a closed-loop soundness breach).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import closedloop, controller_io, plots, report as report_mod
from .config import ProblemConfig, load_config, parse_mode
from .errors import ConfigError, NumericalBlowupError, PropertyViolationError
from .synthesis import (SynthesisResult, TransitionCache, eager_safe,
                        lazy_safe, single_layer_result)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _run_mode(cfg: ProblemConfig, token: str, substeps: int,
              keep_sets: bool = False) -> SynthesisResult:
    kind, l = parse_mode(token, cfg.stack.num_layers)
    if kind == "single":
        result = single_layer_result(cfg.system, cfg.stack, cfg.region, l,
                                     substeps)
    else:
        stack = cfg.stack if l is None else cfg.restack(l)
        fn = lazy_safe if kind == "lazy" else eager_safe
        result = fn(cfg.system, stack, cfg.region, substeps,
                    keep_sets=keep_sets)
    return result


def _result_stack(cfg, token):
    kind, l = parse_mode(token, cfg.stack.num_layers)
    if kind == "single" or l is None:
        return cfg.stack
    return cfg.restack(l)


def _write_artifacts(out_dir, tag, cfg, result, stack, debug_sets=False):
    ctrl_path = os.path.join(out_dir, f"{tag}.controller")
    controller_io.write_controller(ctrl_path, result.controller, stack)
    controller_io.export_domain_csv(os.path.join(out_dir, f"{tag}.domain.csv"),
                                    result.controller, stack)
    rep = report_mod.build_report(cfg.name, result, stack)
    text = report_mod.render_report(rep)
    with open(os.path.join(out_dir, f"{tag}.report.txt"), "w") as fh:
        fh.write(text)
    plots.render_domain_map(os.path.join(out_dir, f"{tag}.domain.png"),
                            result.controller, stack, cfg.region,
                            title=f"{cfg.name} {result.mode}")
    if debug_sets:
        with open(os.path.join(out_dir, f"{tag}.cache.txt"), "w") as fh:
            result.cache.dump(fh)
        with open(os.path.join(out_dir, f"{tag}.trace.csv"), "w") as fh:
            fh.write("iteration,layer,w_cells\n")
            for i, l, n in result.trace:
                fh.write(f"{i},{l},{n}\n")
        if result.debug_sets:
            with open(os.path.join(out_dir, f"{tag}.sets.txt"), "w") as fh:
                for i, l, w in result.debug_sets:
                    idx = " ".join(str(int(v)) for v in w.indices())
                    fh.write(f"{i} {l} {idx}\n")
    return rep, text, ctrl_path


def cmd_synth(args) -> int:
    overrides = {}
    if args.substeps:
        overrides["substeps"] = str(args.substeps)
    cfg = load_config(args.config, overrides)
    out_dir = _ensure_dir(args.out_dir)
    result = _run_mode(cfg, cfg.mode, cfg.substeps,
                       keep_sets=args.debug_dump_sets)
    stack = _result_stack(cfg, cfg.mode)
    _, text, ctrl_path = _write_artifacts(
        out_dir, cfg.name, cfg, result, stack, args.debug_dump_sets)
    sys.stdout.write(text)
    print(f"controller written to {ctrl_path}")
    return 0


def cmd_compare(args) -> int:
    overrides = {}
    if args.substeps:
        overrides["substeps"] = str(args.substeps)
    cfg = load_config(args.config, overrides)
    out_dir = _ensure_dir(args.out_dir)

    runs = []
    for token in args.modes:
        result = _run_mode(cfg, token, cfg.substeps,
                           keep_sets=args.debug_dump_sets)
        stack = _result_stack(cfg, token)
        tag = f"{cfg.name}.{token.replace(':', '')}"
        rep, _, _ = _write_artifacts(out_dir, tag, cfg, result, stack,
                                     args.debug_dump_sets)
        runs.append((token, result, stack, rep))

    # lazy and eager over the same abstraction stack must produce exactly
    # equal winning sets, with every lazy layer domain inside the eager one
    by_layers = {}
    for token, result, stack, _ in runs:
        kind = token.split(":")[0]
        if kind in ("lazy", "eager"):
            by_layers.setdefault(stack.num_layers, {}).setdefault(
                kind, []).append(result)
    for num_layers, group in by_layers.items():
        results = [r for rs in group.values() for r in rs]
        base = results[0]
        for other in results[1:]:
            if other.winning != base.winning:
                raise PropertyViolationError(
                    f"lazy/eager winning sets differ at L={num_layers}")
        for lazy_run in group.get("lazy", ()):
            for eager_run in group.get("eager", ()):
                for l in range(1, num_layers + 1):
                    if not lazy_run.controller.domain(l).issubset(
                            eager_run.controller.domain(l)):
                        raise PropertyViolationError(
                            f"lazy layer-{l} domain not contained in the "
                            f"eager one at L={num_layers}")

    reports = [rep for _, _, _, rep in runs]
    table = report_mod.render_compare_table(reports)
    sys.stdout.write(table)
    with open(os.path.join(out_dir, f"{cfg.name}.compare.txt"), "w") as fh:
        fh.write(table)
    report_mod.write_compare_csv(
        os.path.join(out_dir, f"{cfg.name}.compare.csv"), reports)
    plots.render_compare_bars(
        os.path.join(out_dir, f"{cfg.name}.compare.png"),
        [(token, rep.abstraction_seconds, rep.synthesis_seconds)
         for (token, _, _, rep) in runs])
    return 0


def _sample_domain_states(winning, stack, count, rng):
    cells = winning.indices()
    if cells.size == 0:
        raise ConfigError("controller domain is empty; nothing to simulate")
    pick = cells[rng.integers(0, cells.size, size=count)]
    centers = stack.cell_centers(1, pick)
    jitter = rng.uniform(-0.5, 0.5, size=centers.shape) * stack.eta(1)
    return centers + jitter


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    controller, ctrl_stack = controller_io.read_controller(args.controller)
    if not controller_io.fingerprint_matches(ctrl_stack, cfg.stack):
        raise ConfigError(
            f"{args.controller}: grid fingerprint does not match the "
            f"configuration (alpha/beta/eta1/tau1/layers/dim)")
    substeps = args.substeps or cfg.substeps
    out_dir = _ensure_dir(args.out_dir)

    view = closedloop.QuantizerView(controller, cfg.stack)
    winning = cfg.stack.empty_set(1)
    for l in cfg.stack.layers:
        winning = winning | cfg.stack.gamma(controller.domain(l), 1)
    rng = np.random.default_rng(args.seed)
    x0s = _sample_domain_states(winning, cfg.stack, args.count, rng)

    summary = closedloop.simulate_batch(
        view, cfg.system, x0s, args.steps, args.seed, substeps,
        region=cfg.region, threads=args.threads)

    trajs = []
    for i in range(min(args.save_trajectories, args.count)):
        traj, _ = closedloop.simulate(view, cfg.system, x0s[i], args.steps,
                                      args.seed + 1000 + i, substeps,
                                      region=cfg.region)
        closedloop.write_trajectory_csv(
            traj, os.path.join(out_dir, f"trajectory_{i:03d}.csv"))
        trajs.append(traj)
    if trajs:
        plots.render_trajectories(
            os.path.join(out_dir, "trajectories.png"), controller,
            cfg.stack, trajs, cfg.region, title=f"{cfg.name} rollouts")

    usage = " ".join(f"layer{l}={n}" for l, n in
                     enumerate(summary.layer_usage, start=1))
    print(f"rollouts {summary.rollouts} steps {summary.steps}")
    print(f"violations {summary.violations}")
    print(f"domain-exits {summary.domain_exits}")
    print(f"layer-usage {usage}")
    if not summary.all_safe:
        raise PropertyViolationError("; ".join(summary.failures))
    return 0


def cmd_export_domain(args) -> int:
    controller, stack = controller_io.read_controller(args.controller)
    controller_io.export_domain_csv(args.out, controller, stack)
    print(f"domain written to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="safesynth",
        description="Lazy multi-resolution safety controller synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--substeps", type=int, default=0,
                        help="integrator substeps override")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for batch simulation")
        sp.add_argument("--debug-dump-sets", action="store_true",
                        help="dump caches and per-iteration sets")

    sp = sub.add_parser("synth", help="synthesize a controller")
    sp.add_argument("config")
    sp.add_argument("--out-dir", default="out")
    common(sp)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("compare", help="run several modes on one problem")
    sp.add_argument("config")
    sp.add_argument("--modes", nargs="+", required=True,
                    help="mode tokens: lazy, eager, lazy:<L>, single:<l>, ...")
    sp.add_argument("--out-dir", default="out")
    common(sp)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("simulate", help="closed-loop batch rollouts")
    sp.add_argument("controller")
    sp.add_argument("config")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--save-trajectories", type=int, default=10)
    sp.add_argument("--out-dir", default="out")
    common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("export-domain", help="controller domain to CSV")
    sp.add_argument("controller")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_export_domain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericalBlowupError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 2
    except PropertyViolationError as e:
        print(f"property violation: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
