import math
import os

import numpy as np
import pytest

from glzs.cli import ConfigError, RunConfig, build_parser, load_config, main
from glzs.dsl import GOLDEN_PATH, render
from glzs.experiments import calibrated_params
from glzs.schedule import GlzsParams, build_glzs
from glzs.units import khz, us


def read_csv(path):
    lines = [l for l in open(path, encoding="utf-8").read().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    rows = np.array([[float(x) for x in l.split(",")] for l in lines[1:]])
    return header, rows


def provenance(path):
    return [l[2:] for l in open(path, encoding="utf-8").read().splitlines() if l.startswith("# ")]


def test_fringe_row_count(tmp_path):
    out = tmp_path / "fringe.csv"
    assert main(["fringe", "--phi0-points", "64", "--shots", "1500", "--seed", "7",
                 "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["phi0_rad", "p_up_exact", "n_shots", "n_up", "p_hat", "std_err"]
    assert rows.shape == (64, 6)
    assert np.all(rows[:, 2] == 1500)


def test_lz_scan_values(tmp_path):
    out = tmp_path / "lz.csv"
    assert main(["lz-scan", "--T", "90us,157us,300us", "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["T_us", "p_exact", "p_eq3"]
    assert rows[:, 0] == pytest.approx([90, 157, 300])
    assert np.round(rows[:, 2], 3).tolist() == [0.507, 0.306, 0.104]


def test_validate_reports_boundary(tmp_path, capsys):
    bad = tmp_path / "bad.seq"
    bad.write_text("hold omega 49.24kHz delta 8.68kHz for 5us\n"
                   "hold omega 49.24kHz delta 9.68kHz for 5us\n")
    assert main(["validate", str(bad)]) == 1
    assert "boundary 1" in capsys.readouterr().err


def test_validate_golden_file(capsys):
    assert main(["validate", str(GOLDEN_PATH), "--phi0", "pi/2"]) == 0
    out = capsys.readouterr().out
    assert out.strip()


def test_empty_config_gives_defaults(tmp_path):
    cfg_file = tmp_path / "empty.cfg"
    cfg_file.write_text("")
    cfg = load_config(str(cfg_file))
    assert cfg == RunConfig()
    assert cfg.shots == 1500 and cfg.seed == 0


def test_flag_beats_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("shots=1500  # per point\nseed=4\n")
    assert load_config(str(cfg_file), {"shots": "100"}).shots == 100
    out = tmp_path / "f.csv"
    assert main(["fringe", "--config", str(cfg_file), "--shots", "100", "--phi0-points", "16",
                 "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert np.all(rows[:, 2] == 100)
    assert "seed=4" in provenance(out)


def test_unknown_key_and_bad_value(tmp_path, capsys):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("shotz=10\n")
    with pytest.raises(ConfigError, match="shotz"):
        load_config(str(cfg_file))
    assert main(["fringe", "--config", str(cfg_file)]) == 1
    assert "shotz" in capsys.readouterr().err
    assert main(["fringe", "--shots", "many"]) == 1
    assert main(["map", "--grid", "4by4"]) == 1
    assert main(["bogus"]) == 1


def test_units_at_boundary():
    cfg = load_config(None, {"delta0": "8.68", "phi0": "pi/2", "sweep_times": "90us,0.157ms"})
    assert cfg.delta0 == pytest.approx(khz(8.68))
    assert cfg.phi0 == pytest.approx(math.pi / 2)
    assert cfg.sweep_times == pytest.approx((us(90), us(157)))


def test_missing_schedule_is_runtime_error(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.seq")]) == 2


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["fringe", "--phi0-points", "16", "--shots", "200", "--seed", "5",
                     "--out", str(p)]) == 0
    ta = a.read_bytes().replace(b"out=" + str(a).encode(), b"")
    tb = b.read_bytes().replace(b"out=" + str(b).encode(), b"")
    assert ta == tb


def test_provenance_reproduces_output(tmp_path):
    first = tmp_path / "first.csv"
    assert main(["lz-transient", "--T", "157us", "--time-samples", "51", "--out",
                 str(first)]) == 0
    cfg_file = tmp_path / "echo.cfg"
    cfg_file.write_text("\n".join(provenance(first)) + "\n")
    second = tmp_path / "second.csv"
    assert main(["lz-transient", "--config", str(cfg_file), "--out", str(second)]) == 0
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# out=")]
    assert strip(first) == strip(second)


def test_simulate_outputs_trajectory(tmp_path):
    sched = tmp_path / "s.seq"
    sched.write_text(render(build_glzs(GlzsParams(phi_0=1.0))))
    out = tmp_path / "traj.csv"
    assert main(["simulate", str(sched), "--record-stride", "20", "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header[0] == "t_us" and header[-1] == "berry_plus_rad"
    assert rows[0, 0] == 0.0
    assert np.all(np.diff(rows[:, 0]) >= 0)


def test_default_output_names_and_svg(tmp_path):
    assert main(["lz-scan", "--outdir", str(tmp_path), "--svg", "true"]) == 0
    assert (tmp_path / "lzscan.csv").exists()
    svgs = [f for f in os.listdir(tmp_path) if f.endswith(".svg")]
    assert svgs and open(tmp_path / svgs[0]).read().startswith("<svg")


def test_stdout_output(capsys):
    assert main(["lz-scan", "--T", "90us", "--out", "-"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "T_us,p_exact,p_eq3" in out


def test_export_waveform_csv(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["export-waveform", "--rate", "1MS/s", "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t_us", "omega_khz", "delta_khz", "phi_rad"]
    dur = build_glzs(calibrated_params(GlzsParams())).duration
    # samples at every microsecond plus the closing boundary
    assert len(rows) == math.floor(dur * 1e6) + 2
    assert np.diff(rows[:-1, 0]) == pytest.approx(1.0)
    assert rows[-1, 0] == pytest.approx(dur * 1e6)


def test_export_waveform_raw(tmp_path):
    out = tmp_path / "w.bin"
    assert main(["export-waveform", "--format", "raw", "--rate", "1MS/s", "--phi0", "2",
                 "--out", str(out)]) == 0
    hdr = (tmp_path / "w.bin.hdr").read_text().splitlines()
    fmt = dict(kv.split("=", 1) for kv in hdr[-1].split())
    assert fmt["format"] == "int16le"
    scale = np.array([float(x) for x in fmt["scale"].split(",")])
    q = np.frombuffer(out.read_bytes(), dtype="<i2").reshape(-1, 3)
    assert len(q) == int(fmt["samples"])
    assert np.abs(q).max(axis=0).tolist() == [32767] * 3
    phi = q[:, 2] * scale[2]
    assert phi.max() == pytest.approx(2.0 + math.pi, rel=1e-4)
    assert main(["export-waveform", "--format", "raw", "--out", "-"]) == 1


def test_selftest_single_criterion(capsys):
    assert main(["selftest", "--only", "A1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("A1: PASS")


def test_parser_lists_subcommands():
    text = build_parser().format_help()
    for name in ("simulate", "lz-scan", "lz-transient", "adiabatic-trace", "fringe", "map",
                 "export-waveform", "validate", "selftest"):
        assert name in text
