import csv

import numpy as np
import pytest

from safesynth import (DomainExitError, LayerStack, QuantizerView, SafeRegion,
                       lazy_safe, simulate, simulate_batch, step)
from safesynth.closedloop import write_trajectory_csv
from safesynth.grid import CellSet
from safesynth.synthesis import MultiController

from conftest import zero_system


def manual_controller(stack, domain_cells_by_layer):
    """Controller with input 0 on the given per-layer domain cells."""
    domains, choices = [], []
    for l in stack.layers:
        choice = np.full(stack.num_cells(l), -1, dtype=np.int64)
        cells = domain_cells_by_layer.get(l, [])
        choice[list(cells)] = 0
        choices.append(choice)
        domains.append(CellSet(l, choice >= 0))
    return MultiController(domains=domains, choices=choices)


def zero_loop(toy_stack, toy_region):
    sys_ = zero_system()
    result = lazy_safe(sys_, toy_stack, toy_region)
    return sys_, QuantizerView(result.controller, toy_stack)


# -- quantizer ------------------------------------------------------------------

def test_quantizer_prefers_coarsest_layer():
    st = LayerStack([0, 0], [1, 1], [0.25, 0.25], 0.1, 2)
    x = np.array([0.1, 0.1])
    fine = st.cell_of(x, 1)
    coarse = st.cell_of(x, 2)
    ctrl = manual_controller(st, {1: [fine], 2: [coarse]})
    view = QuantizerView(ctrl, st)
    assert view.quantize(x) == (2, coarse)


def test_quantizer_falls_back_to_fine_layer():
    st = LayerStack([0, 0], [1, 1], [0.25, 0.25], 0.1, 2)
    x = np.array([0.1, 0.1])
    ctrl = manual_controller(st, {1: [st.cell_of(x, 1)]})
    view = QuantizerView(ctrl, st)
    assert view.quantize(x) == (1, st.cell_of(x, 1))


def test_quantizer_none_outside_domain_and_outside_y():
    st = LayerStack([0, 0], [1, 1], [0.25, 0.25], 0.1, 2)
    ctrl = manual_controller(st, {})
    view = QuantizerView(ctrl, st)
    assert view.quantize(np.array([0.5, 0.5])) is None
    assert view.quantize(np.array([1.5, 0.5])) is None


def test_quantize_batch_matches_scalar(dcdc_desk):
    result = lazy_safe(dcdc_desk.system, dcdc_desk.stack, dcdc_desk.region,
                       dcdc_desk.substeps)
    view = QuantizerView(result.controller, dcdc_desk.stack)
    rng = np.random.default_rng(2)
    xs = rng.uniform([1.15, 5.45], [1.55, 5.85], size=(300, 2))
    layers, cells = view.quantize_batch(xs)
    for i, x in enumerate(xs):
        q = view.quantize(x)
        if q is None:
            assert layers[i] == 0
        else:
            assert (layers[i], cells[i]) == q


# -- stepping -------------------------------------------------------------------

def test_step_identity_flow(toy_stack, toy_region):
    sys_, view = zero_loop(toy_stack, toy_region)
    rng = np.random.default_rng(0)
    x = np.array([0.3, 0.7])
    x2, layer, u = step(view, sys_, x, rng)
    assert np.array_equal(x2, x)
    assert u == 0 and layer in (1, 2)


def test_step_outside_domain_is_an_error(toy_stack, toy_region):
    sys_, view = zero_loop(toy_stack, toy_region)
    with pytest.raises(ValueError):
        step(view, sys_, np.array([2.0, 2.0]), np.random.default_rng(0))


def test_step_domain_exit_is_loud():
    # one domain cell, dynamics that leave it in one step
    st = LayerStack([0, 0], [1, 1], [0.25, 0.25], 0.1, 1)
    sys_ = zero_system()
    sys_.rhs = lambda x, u: np.full_like(x, 3.0)
    x = np.array([0.1, 0.1])
    ctrl = manual_controller(st, {1: [st.cell_of(x, 1)]})
    view = QuantizerView(ctrl, st)
    with pytest.raises(DomainExitError):
        step(view, sys_, x, np.random.default_rng(0))


# -- simulation -------------------------------------------------------------------

def test_simulate_zero_steps(toy_stack, toy_region):
    sys_, view = zero_loop(toy_stack, toy_region)
    traj, verdict = simulate(view, sys_, np.array([0.4, 0.4]), 0, seed=1,
                             region=toy_region)
    assert len(traj) == 1 and verdict.safe


def test_simulate_identity_flow_is_safe(toy_stack, toy_region):
    sys_, view = zero_loop(toy_stack, toy_region)
    traj, verdict = simulate(view, sys_, np.array([0.4, 0.4]), 20, seed=1,
                             region=toy_region)
    assert verdict.safe
    assert all(np.array_equal(s, traj.states[0]) for s in traj.states)
    # non-uniform time stamps accumulate the tau of the layer used
    for t0, t1, layer in zip(traj.times, traj.times[1:], traj.layers):
        assert t1 - t0 == pytest.approx(toy_stack.tau(layer))


def test_simulate_records_domain_exit_in_verdict():
    st = LayerStack([0, 0], [1, 1], [0.25, 0.25], 0.1, 1)
    sys_ = zero_system()
    sys_.rhs = lambda x, u: np.full_like(x, 1.0)
    x = np.array([0.1, 0.1])
    ctrl = manual_controller(st, {1: [st.cell_of(x, 1)]})
    view = QuantizerView(ctrl, st)
    traj, verdict = simulate(view, sys_, x, 5, seed=0,
                             region=SafeRegion([0, 0], [1, 1]))
    assert not verdict.safe
    assert "domain" in verdict.reason


def test_simulate_deterministic_per_seed(dcdc_desk):
    result = lazy_safe(dcdc_desk.system, dcdc_desk.stack, dcdc_desk.region,
                       dcdc_desk.substeps)
    view = QuantizerView(result.controller, dcdc_desk.stack)
    x0 = dcdc_desk.stack.cell_centers(1, [result.winning.indices()[0]])[0]
    a, _ = simulate(view, dcdc_desk.system, x0, 40, seed=5,
                    region=dcdc_desk.region)
    b, _ = simulate(view, dcdc_desk.system, x0, 40, seed=5,
                    region=dcdc_desk.region)
    c, _ = simulate(view, dcdc_desk.system, x0, 40, seed=6,
                    region=dcdc_desk.region)
    assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))
    assert any(not np.array_equal(x, y) for x, y in zip(a.states, c.states))


def test_batch_thread_count_does_not_change_results(dcdc_desk):
    result = lazy_safe(dcdc_desk.system, dcdc_desk.stack, dcdc_desk.region,
                       dcdc_desk.substeps)
    view = QuantizerView(result.controller, dcdc_desk.stack)
    rng = np.random.default_rng(1)
    cells = result.winning.indices()
    pick = cells[rng.integers(0, cells.size, 64)]
    x0s = dcdc_desk.stack.cell_centers(1, pick)
    a = simulate_batch(view, dcdc_desk.system, x0s, 30, seed=3,
                       substeps=10, region=dcdc_desk.region, threads=1)
    b = simulate_batch(view, dcdc_desk.system, x0s, 30, seed=3,
                       substeps=10, region=dcdc_desk.region, threads=4)
    assert (a.violations, a.domain_exits, a.layer_usage) == \
        (b.violations, b.domain_exits, b.layer_usage)
    assert a.all_safe


def test_quantizer_total_on_winning_set(dcdc_desk):
    result = lazy_safe(dcdc_desk.system, dcdc_desk.stack, dcdc_desk.region,
                       dcdc_desk.substeps)
    view = QuantizerView(result.controller, dcdc_desk.stack)
    rng = np.random.default_rng(8)
    cells = result.winning.indices()
    pick = cells[rng.integers(0, cells.size, 500)]
    xs = dcdc_desk.stack.cell_centers(1, pick) + \
        rng.uniform(-0.5, 0.5, (500, 2)) * dcdc_desk.stack.eta(1)
    layers, _ = view.quantize_batch(xs)
    assert np.all(layers >= 1)


def test_trajectory_csv(tmp_path, toy_stack, toy_region):
    sys_, view = zero_loop(toy_stack, toy_region)
    traj, _ = simulate(view, sys_, np.array([0.4, 0.4]), 5, seed=1,
                       region=toy_region)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "x0", "x1", "layer", "input_index"]
    assert len(rows) == 1 + len(traj)
    assert float(rows[1][0]) == 0.0
    assert rows[-1][3] == ""  # final sample has no applied input