import csv
import os

import numpy as np
import pytest

from safesynth import ConfigError, PropertyViolationError, lazy_safe
from safesynth.cli import main
from safesynth.config import assemble, load_config, parse_kv, parse_mode
from safesynth.controller_io import (export_domain_csv, fingerprint_matches,
                                     read_controller, write_controller)
from safesynth.report import build_report, render_report

DESK_KV = ("system = dcdc\n"
           "eta1 = 0.005 0.005\n"
           "tau1 = 0.625\n"
           "layers = 3\n")


@pytest.fixture
def desk_cfg_file(tmp_path):
    path = tmp_path / "desk.cfg"
    path.write_text(DESK_KV)
    return str(path)


# -- config parsing -------------------------------------------------------------

def test_parse_kv_comments_and_blanks():
    kv = parse_kv("# hello\n\n system = dcdc  # trailing\n layers=2 \n")
    assert kv == {"system": "dcdc", "layers": "2"}


@pytest.mark.parametrize("text,needle", [
    ("wibble = 3\n", "wibble"),
    ("system = dcdc\nsystem = dcdc\n", "duplicate"),
    ("just a line\n", "key = value"),
])
def test_parse_kv_diagnostics(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_kv(text)


@pytest.mark.parametrize("overrides,needle", [
    ({"eta1": "0.005"}, "eta1"),
    ({"tau1": "zero"}, "tau1"),
    ({"layers": "0"}, "layers"),
    ({"layers": "9"}, "tile|divisible"),
    ({"T.upper": "9 9"}, "inside Y"),
    ({"mode": "sometimes"}, "mode"),
    ({"mode": "single"}, "single"),
    ({"mode": "single:7"}, "out of range"),
    ({"system.w": "-1 0"}, "disturbance"),
])
def test_config_validation_names_offender(overrides, needle):
    kv = {"system": "dcdc", "eta1": "0.005 0.005", "layers": "3"}
    kv.update(overrides)
    with pytest.raises(ConfigError, match=needle):
        assemble(kv)


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError, match="unknown system"):
        assemble({"system": "pendulum"})


def test_inline_system_roundtrip():
    kv = {
        "system.dim": "2",
        "system.rhs": "zero",
        "system.inputs": "0.0",
        "system.L": "0 0; 0 0",
        "Y.lower": "0 0", "Y.upper": "1 1",
        "eta1": "0.25 0.25", "tau1": "0.1", "layers": "2",
    }
    cfg = assemble(kv)
    assert cfg.system.num_inputs == 1
    assert cfg.stack.num_layers == 2


def test_parse_mode_tokens():
    assert parse_mode("lazy", 3) == ("lazy", None)
    assert parse_mode("eager:2", 3) == ("eager", 2)
    assert parse_mode("single:1", 3) == ("single", 1)
    with pytest.raises(ConfigError):
        parse_mode("single:0", 3)


# -- controller file round trip ---------------------------------------------------

def synth_desk(tmp_path):
    cfg = assemble(parse_kv(DESK_KV))
    result = lazy_safe(cfg.system, cfg.stack, cfg.region, cfg.substeps)
    path = tmp_path / "desk.controller"
    write_controller(path, result.controller, cfg.stack)
    return cfg, result, path


def test_controller_roundtrip_bit_exact(tmp_path):
    cfg, result, path = synth_desk(tmp_path)
    controller, stack = read_controller(path)
    assert fingerprint_matches(stack, cfg.stack)
    for l in cfg.stack.layers:
        assert controller.domain(l) == result.controller.domain(l)
        assert np.array_equal(controller.choices[l - 1],
                              result.controller.choices[l - 1])
    again = tmp_path / "again.controller"
    write_controller(again, controller, stack)
    assert path.read_bytes() == again.read_bytes()
    # the reloaded controller still satisfies the invariants
    controller.validate(result.cache, cfg.stack, result.winning)


def test_controller_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.controller"
    path.write_text("not a controller\n")
    with pytest.raises(ConfigError):
        read_controller(path)
    path.write_text("safesynth-controller 1\ndim 2\n")
    with pytest.raises(ConfigError):
        read_controller(path)


def test_fingerprint_mismatch_detected(tmp_path):
    cfg, _, path = synth_desk(tmp_path)
    _, stack = read_controller(path)
    other = cfg.restack(1)
    assert not fingerprint_matches(stack, other)


def test_export_domain_csv(tmp_path):
    cfg, result, path = synth_desk(tmp_path)
    out = tmp_path / "domain.csv"
    export_domain_csv(out, result.controller, cfg.stack)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["layer", "cell_index", "center_0", "center_1",
                       "input_index"]
    assert len(rows) - 1 == result.controller.total_cells()
    layer, idx = int(rows[1][0]), int(rows[1][1])
    center = cfg.stack.cell_centers(layer, [idx])[0]
    assert [float(rows[1][2]), float(rows[1][3])] == pytest.approx(center)


# -- report ------------------------------------------------------------------------

def test_report_volumes(desk_cfg_file):
    cfg = load_config(desk_cfg_file)
    result = lazy_safe(cfg.system, cfg.stack, cfg.region, cfg.substeps)
    rep = build_report(cfg.name, result, cfg.stack)
    # the layer-1 union is canonical; the per-layer sum may double count
    assert rep.domain_volume_sum >= rep.winning_volume - 1e-12
    assert rep.winning_volume == pytest.approx(
        len(result.winning) * cfg.stack.cell_volume(1))
    text = render_report(rep)
    assert "winning-cells" in text and "domain-volume-sum" in text


# -- CLI end to end ------------------------------------------------------------------

def test_cli_synth_writes_artifacts(desk_cfg_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["synth", desk_cfg_file, "--out-dir", str(out)])
    assert rc == 0
    assert (out / "dcdc.controller").exists()
    assert (out / "dcdc.domain.csv").exists()
    assert (out / "dcdc.report.txt").exists()
    assert (out / "dcdc.domain.png").exists()


def test_cli_synth_debug_dump(desk_cfg_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["synth", desk_cfg_file, "--out-dir", str(out),
               "--debug-dump-sets"])
    assert rc == 0
    assert (out / "dcdc.cache.txt").exists()
    assert (out / "dcdc.trace.csv").exists()
    assert (out / "dcdc.sets.txt").exists()


def test_cli_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("system = dcdc\nlayers = 7\n")  # 800 not divisible by 64
    assert main(["synth", str(bad), "--out-dir", str(tmp_path / "o")]) == 1


def test_cli_usage_error_exit_code():
    assert main(["synth"]) == 1
    assert main(["bogus-command"]) == 1


def test_cli_numerical_error_exit_code(tmp_path):
    cfgfile = tmp_path / "blow.cfg"
    cfgfile.write_text(
        "system.dim = 1\nsystem.A.1 = 10000000\nsystem.b = 0\n"
        "Y.lower = 0\nY.upper = 1\neta1 = 0.125\ntau1 = 1000\nlayers = 1\n")
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main(["synth", str(cfgfile), "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_cli_property_violation_exit_code(desk_cfg_file, tmp_path,
                                          monkeypatch):
    import safesynth.cli as cli_mod

    def boom(*a, **k):
        raise PropertyViolationError("rigged")

    monkeypatch.setattr(cli_mod, "_run_mode", boom)
    rc = main(["synth", desk_cfg_file, "--out-dir", str(tmp_path / "o")])
    assert rc == 3


def test_cli_compare_lazy_eager(desk_cfg_file, tmp_path):
    out = tmp_path / "cmp"
    rc = main(["compare", desk_cfg_file, "--modes", "lazy", "eager",
               "single:1", "--out-dir", str(out)])
    assert rc == 0
    assert (out / "dcdc.compare.txt").exists()
    assert (out / "dcdc.compare.csv").exists()
    assert (out / "dcdc.compare.png").exists()
    with open(out / "dcdc.compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["lazy", "eager", "single:1"]
    # identical winning sets for lazy/eager; strictly lazier exploration
    assert rows[0]["winning_cells"] == rows[1]["winning_cells"]
    assert int(rows[0]["explored_pairs"]) < int(rows[1]["explored_pairs"])


def test_cli_compare_is_deterministic(desk_cfg_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = main(["compare", desk_cfg_file, "--modes", "lazy:3",
                   "--out-dir", str(out)])
        assert rc == 0
        outs.append((out / "dcdc.lazy3.controller").read_bytes())
        with open(out / "dcdc.lazy3.domain.csv", "rb") as fh:
            outs[-1] += fh.read()
    assert outs[0] == outs[1]


def test_cli_simulate_end_to_end(desk_cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["synth", desk_cfg_file, "--out-dir", str(out)])
    rc = main(["simulate", str(out / "dcdc.controller"), desk_cfg_file,
               "--count", "40", "--steps", "30", "--seed", "1",
               "--save-trajectories", "3", "--out-dir", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "violations 0" in text
    assert "domain-exits 0" in text
    assert (out / "trajectory_000.csv").exists()
    assert (out / "trajectories.png").exists()


def test_cli_simulate_fingerprint_mismatch(desk_cfg_file, tmp_path):
    out = tmp_path / "out"
    main(["synth", desk_cfg_file, "--out-dir", str(out)])
    other = tmp_path / "other.cfg"
    other.write_text("system = dcdc\neta1 = 0.01 0.01\ntau1 = 0.625\n"
                     "layers = 2\n")
    rc = main(["simulate", str(out / "dcdc.controller"), str(other),
               "--out-dir", str(out)])
    assert rc == 1


def test_cli_simulate_empty_domain_diagnostic(tmp_path, capsys):
    # the literal fine-grid sampling time at the coarse desk grid yields an
    # empty controller; simulate must fail cleanly
    cfgfile = tmp_path / "empty.cfg"
    cfgfile.write_text("system = dcdc\neta1 = 0.005 0.005\n"
                       "tau1 = 0.0625\nlayers = 3\n")
    out = tmp_path / "out"
    assert main(["synth", str(cfgfile), "--out-dir", str(out)]) == 0
    rc = main(["simulate", str(out / "dcdc.controller"), str(cfgfile),
               "--out-dir", str(out)])
    assert rc == 1
    assert "nothing to simulate" in capsys.readouterr().err


def test_cli_export_domain(desk_cfg_file, tmp_path):
    out = tmp_path / "out"
    main(["synth", desk_cfg_file, "--out-dir", str(out)])
    target = tmp_path / "dom.csv"
    rc = main(["export-domain", str(out / "dcdc.controller"),
               "--out", str(target)])
    assert rc == 0
    assert target.exists()
    with open(target) as fh:
        assert fh.readline().startswith("layer,cell_index")


def test_shipped_configs_load():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in ("dcdc_desk.cfg", "dcdc_paper.cfg", "spiral.cfg"):
        cfg = load_config(os.path.join(root, name))
        assert cfg.stack.num_layers >= 1