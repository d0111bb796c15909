"""Command-line entry point: ``glzs <subcommand> [options]``.

Frequencies on the command line and in config files are ordinary
frequencies in kHz and times are in microseconds unless a unit is given
(``8.68kHz``, ``157us``, ``2ms``). Values are converted to rad/s and s once,
while the configuration is read.

Exit status: 0 on success, 1 on invalid input or a failed validation,
2 on a runtime failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bloch import DOWN
from .dsl import DslSyntaxError, parse_quantity, parse_schedule
from .evolve import ErrorOffsets, IntegratorConfig, apply_static_error, evolve
from .experiments import (CALIBRATIONS, Table, calibrated_params, run_adiabatic_trace,
                          run_fringe, run_lz_scan, run_lz_transient, run_robustness_map,
                          trajectory_table, write_csv)
from .schedule import (TRANSPORT_MODES, GlzsParams, Schedule, ScheduleError, build_glzs,
                       iter_waveform, validate)
from .units import DELTA_0, OMEGA_I, to_khz, to_us

SUBCOMMANDS = ("simulate", "lz-scan", "lz-transient", "adiabatic-trace", "fringe", "map",
               "export-waveform", "validate", "selftest")


class ConfigError(ValueError):
    """Unknown key or malformed value in a config file or on the command line."""


# ------------------------------------------------------------------ RunConfig


@dataclass(frozen=True)
class RunConfig:
    """Every setting of one run, in SI angular units."""

    subcommand: str = ""
    schedule: Optional[str] = None
    phi0: float = 0.0
    phi0_points: int = 64
    phi0_span: float = 4.0 * math.pi
    grid: str = "41x25"
    shots: int = 1500
    seed: int = 0
    max_phase: float = 0.05
    max_rotation: float = 0.01
    min_steps: int = 64
    method: str = "cf4"
    record_stride: int = 1
    out: Optional[str] = None
    outdir: str = "."
    emit_svg: bool = False
    delta0: float = DELTA_0
    omega_i: float = OMEGA_I
    transport_mode: str = "ramp-after-echo"
    hold_delta: bool = False
    calibration: str = "pipeline"
    echo_azimuth: float = 0.0
    amp_err: float = 0.0
    freq_err: float = 0.0
    sweep_times: Tuple[float, ...] = (90e-6, 157e-6, 300e-6)
    time_samples: int = 401
    trace_rate: float = math.pi / 200e-6
    trace_bmag: float = 2.0 * math.pi * 50e3
    sample_rate: float = 1e6
    format: str = "csv"
    workers: int = 1
    only: Tuple[str, ...] = ()

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.max_phase, self.max_rotation, self.min_steps,
                                self.record_stride, self.method)

    def params(self) -> GlzsParams:
        return GlzsParams(omega_i=self.omega_i, delta_0=self.delta0, phi_0=self.phi0,
                          echo_azimuth=self.echo_azimuth, phi_transport_mode=self.transport_mode,
                          hold_delta=self.hold_delta)

    def errors(self) -> Optional[ErrorOffsets]:
        if self.amp_err == 0 and self.freq_err == 0:
            return None
        return ErrorOffsets(self.amp_err, self.freq_err * self.delta0)

    def provenance(self) -> Dict[str, str]:
        out = {"glzs_version": __version__}
        for f in fields(self):
            out[f.name] = _CODECS[f.name][1](getattr(self, f.name))
        return out


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None


def _parse_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _parse_sample_rate(s: str) -> float:
    t = s.strip()
    for suffix, mult in (("GS/s", 1e9), ("MS/s", 1e6), ("kS/s", 1e3), ("S/s", 1.0)):
        if t.endswith(suffix):
            return _parse_float(t[: -len(suffix)]) * mult
    return _parse_float(t)


def _parse_times(s: str) -> Tuple[float, ...]:
    vals = tuple(parse_quantity(x, "time", "us") for x in s.split(",") if x.strip())
    if not vals:
        raise ValueError("expected a comma-separated list of times")
    return vals


def _exact(unit):
    return lambda v: f"{float(v)!r}{unit}"


_ident = str
_opt = lambda v: "" if v is None else str(v)
_CODECS: Dict[str, Tuple[Callable[[str], object], Callable[[object], str]]] = {
    "subcommand": (_choice(SUBCOMMANDS), _ident),
    "schedule": (lambda s: s or None, _opt),
    "phi0": (lambda s: parse_quantity(s, "angle"), _exact("rad")),
    "phi0_points": (_parse_int, str),
    "phi0_span": (lambda s: parse_quantity(s, "angle"), _exact("rad")),
    "grid": (str, _ident),
    "shots": (_parse_int, str),
    "seed": (_parse_int, str),
    "max_phase": (_parse_float, repr),
    "max_rotation": (_parse_float, repr),
    "min_steps": (_parse_int, str),
    "method": (_choice(("cf4", "midpoint")), _ident),
    "record_stride": (_parse_int, str),
    "out": (lambda s: s or None, _opt),
    "outdir": (str, _ident),
    "emit_svg": (_parse_bool, lambda v: str(bool(v)).lower()),
    "delta0": (lambda s: parse_quantity(s, "frequency", "kHz"), _exact("rad/s")),
    "omega_i": (lambda s: parse_quantity(s, "frequency", "kHz"), _exact("rad/s")),
    "transport_mode": (_choice(TRANSPORT_MODES), _ident),
    "hold_delta": (_parse_bool, lambda v: str(bool(v)).lower()),
    "calibration": (_choice(CALIBRATIONS), _ident),
    "echo_azimuth": (lambda s: parse_quantity(s, "angle"), _exact("rad")),
    "amp_err": (_parse_float, repr),
    "freq_err": (_parse_float, repr),
    "sweep_times": (_parse_times, lambda v: ",".join(f"{x!r}s" for x in v)),
    "time_samples": (_parse_int, str),
    "trace_rate": (lambda s: parse_quantity(s, "rate", "rad/us"), _exact("rad/s")),
    "trace_bmag": (lambda s: parse_quantity(s, "frequency", "kHz"), _exact("rad/s")),
    "sample_rate": (_parse_sample_rate, repr),
    "format": (_choice(("csv", "raw")), _ident),
    "workers": (_parse_int, str),
    "only": (lambda s: tuple(x.strip() for x in s.split(",") if x.strip()), ",".join),
}


def _convert(key: str, raw: str, origin: str):
    if key not in _CODECS:
        raise ConfigError(f"{origin}: unknown key {key!r}")
    try:
        return _CODECS[key][0](raw)
    except ValueError as e:
        raise ConfigError(f"{origin}: malformed value for {key}: {e}") from None


def check_config(cfg: RunConfig) -> RunConfig:
    """Range checks that do not depend on the subcommand."""
    positive = ("phi0_points", "max_phase", "max_rotation", "min_steps", "record_stride",
                "delta0", "omega_i", "trace_rate", "trace_bmag", "sample_rate", "workers",
                "time_samples", "phi0_span")
    for name in positive:
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.shots < 0 or cfg.seed < 0:
        raise ConfigError("shots and seed must be non-negative")
    if not 1.0 + cfg.amp_err > 0:
        raise ConfigError("amp_err must be greater than -1")
    if any(t <= 0 for t in cfg.sweep_times):
        raise ConfigError("sweep_times must be positive")
    _grid_spec(cfg.grid)
    return cfg


def load_config(path, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """Read ``key=value`` lines ('#' comments allowed); ``overrides`` win.

    An empty file gives the defaults.
    """
    values: Dict[str, object] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for n, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
                k, v = (x.strip() for x in line.split("=", 1))
                if k == "glzs_version":
                    # provenance headers carry it; informational only
                    continue
                values[k] = _convert(k, v, f"{path}:{n}")
    for k, v in (overrides or {}).items():
        values[k] = _convert(k, v, "command line")
    return check_config(RunConfig(**values))


def _grid_spec(spec: str):
    """``NxM`` for a regular grid, ``random:N`` for uniform random samples."""
    s = spec.strip().lower()
    try:
        if s.startswith("random:"):
            n = int(s.split(":", 1)[1])
            if n < 1:
                raise ValueError
            return "random", n
        a, b = s.split("x")
        a, b = int(a), int(b)
        if a < 2 or b < 2:
            raise ValueError
        return "grid", (a, b)
    except ValueError:
        raise ConfigError(f"malformed grid {spec!r}; expected NxM (N, M >= 2) or random:N") \
            from None


# ------------------------------------------------------------------ argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# flag -> (config key, help); the key decides parsing
_COMMON = [
    ("--config", None, "key=value config file; flags override its values"),
    ("--shots", "shots", "shots per measured point (default 1500)"),
    ("--seed", "seed", "master seed (default 0)"),
    ("--out", "out", "output path ('-' for standard output)"),
    ("--outdir", "outdir", "directory for default output names"),
    ("--svg", "emit_svg", "also write an SVG plot next to the CSV (true/false)"),
    ("--max-phase", "max_phase", "integrator: max |B| dt per step"),
    ("--max-rotation", "max_rotation", "integrator: max field-direction turn per step"),
    ("--min-steps", "min_steps", "integrator: min steps per segment"),
    ("--method", "method", "integrator: cf4 or midpoint"),
]
_BUILDER = [
    ("--phi0", "phi0", "transport angle (rad, expressions like 'pi/2' allowed)"),
    ("--delta0", "delta0", "gap at the crossing (kHz)"),
    ("--omega-i", "omega_i", "sweep amplitude (kHz)"),
    ("--transport-mode", "transport_mode", "|".join(TRANSPORT_MODES)),
    ("--hold-delta", "hold_delta", "keep the detuning on during transport (true/false)"),
    ("--calibration", "calibration", "|".join(CALIBRATIONS)),
    ("--echo-azimuth", "echo_azimuth", "echo axis azimuth (rad)"),
    ("--amp-err", "amp_err", "static relative amplitude error"),
    ("--freq-err", "freq_err", "static detuning error in units of delta0"),
]
_SPECIFIC = {
    "simulate": [("--record-stride", "record_stride", "keep every n-th step")],
    "lz-scan": [("--T", "sweep_times", "comma-separated sweep times (us)")],
    "lz-transient": [("--T", "sweep_times", "sweep time (us); first entry is used"),
                     ("--time-samples", "time_samples", "rows in the output")],
    "adiabatic-trace": [("--rate", "trace_rate", "polar rotation rate, e.g. 'pi per 200us'"),
                        ("--bmag", "trace_bmag", "field magnitude (kHz)")],
    "fringe": [("--phi0-points", "phi0_points", "number of phi0 values"),
               ("--phi0-span", "phi0_span", "phi0 range [0, span] (rad)")],
    "map": [("--grid", "grid", "NxM grid or random:N samples"),
            ("--workers", "workers", "worker processes")],
    "export-waveform": [("--rate", "sample_rate", "samples per second (e.g. 1MS/s)"),
                        ("--format", "format", "csv or raw (int16 little endian)")],
    "validate": [],
    "selftest": [("--only", "only", "comma-separated criteria, e.g. A1,A3")],
}
_BUILDER_USERS = ("simulate", "fringe", "map", "export-waveform", "validate")
_SCHEDULE_USERS = ("simulate", "export-waveform", "validate")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="glzs", description="Geometric Landau-Zener-Stueckelberg interferometry")
    ap.add_argument("--version", action="version", version=f"glzs {__version__}")
    sub = ap.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name in _SCHEDULE_USERS:
            p.add_argument("schedule", nargs="?", default=None,
                           help="schedule file; default is the built-in interferometer")
        opts = _COMMON + (_BUILDER if name in _BUILDER_USERS else []) + _SPECIFIC[name]
        for flag, key, help_ in opts:
            p.add_argument(flag, dest=key or "config", default=None, metavar="VALUE",
                           help=help_)
    return ap


def config_from_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    if ns.subcommand is None:
        raise ConfigError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
    overrides = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    return load_config(ns.config, overrides)


# ------------------------------------------------------------------ running


def _say(msg: str):
    print(msg, file=sys.stderr)


def _out_path(cfg: RunConfig, default_name: str) -> str:
    if cfg.out:
        return cfg.out
    return os.path.join(cfg.outdir, default_name)


def _emit(cfg: RunConfig, table: Table, default_name: str) -> Optional[str]:
    path = _out_path(cfg, default_name)
    if path == "-":
        write_csv(sys.stdout, table, cfg.provenance())
        return None
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    write_csv(path, table, cfg.provenance())
    _say(f"wrote {len(table)} rows to {path}")
    return path


def _svg_path(csv_path: Optional[str], cfg: RunConfig) -> Optional[str]:
    if not cfg.emit_svg or csv_path is None:
        return None
    return os.path.splitext(csv_path)[0] + ".svg"


def _load_schedule(cfg: RunConfig, check: bool = True) -> Schedule:
    if cfg.schedule:
        with open(cfg.schedule, encoding="utf-8") as fh:
            text = fh.read()
        return parse_schedule(text, {"phi0": cfg.phi0}, check_continuity=check)
    return build_glzs(calibrated_params(cfg.params(), cfg.calibration, cfg.integrator()))


def cmd_simulate(cfg: RunConfig) -> int:
    s = _load_schedule(cfg)
    err = cfg.errors()
    if err is not None:
        s = apply_static_error(s, err)
    traj = evolve(s, DOWN, cfg.integrator())
    path = _emit(cfg, trajectory_table(traj), "trajectory.csv")
    svg = _svg_path(path, cfg)
    if svg:
        from .svg import line_plot
        line_plot(svg, to_us(traj.times), {"P_up": traj.p_up_bare,
                                           "P_plus": traj.p_plus_adiabatic},
                  "trajectory", "t (us)", "population")
    return 0


def cmd_lz_scan(cfg: RunConfig) -> int:
    tab = run_lz_scan(cfg.sweep_times, cfg.delta0, cfg.omega_i, cfg.integrator())
    path = _emit(cfg, tab, "lzscan.csv")
    svg = _svg_path(path, cfg)
    if svg:
        from .svg import line_plot
        line_plot(svg, tab["T_us"], {"numerical": tab["p_exact"], "asymptotic": tab["p_eq3"]},
                  "LZ transition probability", "T (us)", "P")
    return 0


def cmd_lz_transient(cfg: RunConfig) -> int:
    tab = run_lz_transient(cfg.sweep_times[0], cfg.time_samples, cfg.delta0, cfg.omega_i,
                           cfg.integrator())
    path = _emit(cfg, tab, "lztransient.csv")
    svg = _svg_path(path, cfg)
    if svg:
        from .svg import line_plot
        line_plot(svg, tab["t_us"], {"P_plus": tab["p_plus_adiabatic"]},
                  "LZ transient", "t (us)", "upper adiabatic population")
    return 0


def cmd_adiabatic_trace(cfg: RunConfig) -> int:
    tab = run_adiabatic_trace(cfg.trace_rate, cfg.trace_bmag, cfg.shots, cfg.seed,
                              cfg=cfg.integrator())
    _say(f"max deviation from sin^2(theta/2): {tab['max_deviation']:.6g}")
    path = _emit(cfg, tab, "adiabatic_trace.csv")
    svg = _svg_path(path, cfg)
    if svg:
        from .svg import line_plot
        line_plot(svg, tab["t_us"], {"exact": tab["p_up_exact"], "ideal": tab["p_up_ideal"],
                                     "sampled": tab["p_hat"]},
                  "adiabatic rotation", "t (us)", "P_up")
    return 0


def cmd_fringe(cfg: RunConfig) -> int:
    grid = np.linspace(0.0, cfg.phi0_span, cfg.phi0_points)
    f = run_fringe(grid, cfg.shots, cfg.seed, cfg.params(), cfg.integrator(), cfg.errors(),
                   cfg.calibration)
    _say(f"fitted contrast {f.fitted_contrast:.6g}, period factor {f.period_factor:.6g}")
    path = _emit(cfg, f.table(), "fringe.csv")
    svg = _svg_path(path, cfg)
    if svg:
        from .svg import line_plot
        series = {"exact": f.p_up_exact}
        if f.p_up_sampled:
            series["sampled"] = [r.p_hat for r in f.p_up_sampled]
        line_plot(svg, grid, series, "geometric fringe", "phi0 (rad)", "P_up")
    return 0


def cmd_map(cfg: RunConfig) -> int:
    mode, arg = _grid_spec(cfg.grid)
    kw = {"grid_shape": arg} if mode == "grid" else {"n_samples": arg}
    m = run_robustness_map(mode, shots=cfg.shots, seed=cfg.seed, params=cfg.params(),
                           cfg=cfg.integrator(), workers=cfg.workers,
                           calibration=cfg.calibration, **kw)
    path = _emit(cfg, m.table(), "map.csv")
    svg = _svg_path(path, cfg)
    if svg and m.shape is not None:
        from .svg import heatmap
        heatmap(svg, m.contrast.reshape(m.shape), (m.amp_err.min(), m.amp_err.max()),
                (m.freq_err_over_delta0.min(), m.freq_err_over_delta0.max()),
                "fringe contrast", "amplitude error", "detuning error / delta0")
    return 0


def cmd_export_waveform(cfg: RunConfig) -> int:
    s = _load_schedule(cfg)
    err = cfg.errors()
    if err is not None:
        s = apply_static_error(s, err)
    rate = cfg.sample_rate
    if cfg.format == "csv":
        path = _out_path(cfg, "waveform.csv")
        fh = sys.stdout if path == "-" else open(path, "w", encoding="utf-8", newline="\n")
        try:
            for k, v in cfg.provenance().items():
                fh.write(f"# {k}={v}\n")
            fh.write("t_us,omega_khz,delta_khz,phi_rad\n")
            n = 0
            for w in iter_waveform(s, rate):
                cols = (to_us(w.t), to_khz(w.omega), to_khz(w.delta), w.phi)
                fh.write("".join(",".join(_fmt(x) for x in row) + "\n" for row in zip(*cols)))
                n += len(w)
        finally:
            if fh is not sys.stdout:
                fh.close()
        _say(f"wrote {n} samples to {path}")
        return 0
    path = _out_path(cfg, "waveform.bin")
    if path == "-":
        raise ConfigError("raw waveforms need a file path (--out)")
    peak = np.zeros(3)
    n = 0
    for w in iter_waveform(s, rate):
        peak = np.maximum(peak, [np.abs(w.omega).max(), np.abs(w.delta).max(),
                                 np.abs(w.phi).max()])
        n += len(w)
    scale = np.where(peak > 0, peak / 32767.0, 1.0)
    with open(path, "wb") as fh:
        for w in iter_waveform(s, rate):
            q = np.rint(np.column_stack([w.omega, w.delta, w.phi]) / scale)
            fh.write(np.clip(q, -32767, 32767).astype("<i2").tobytes())
    with open(path + ".hdr", "w", encoding="utf-8", newline="\n") as fh:
        for k, v in cfg.provenance().items():
            fh.write(f"# {k}={v}\n")
        fh.write(f"format=int16le channels=omega,delta,phi units=rad/s,rad/s,rad "
                 f"sample_rate={rate!r} samples={n} "
                 f"scale={','.join(repr(float(x)) for x in scale)}\n")
    _say(f"wrote {n} samples x 3 channels to {path} (scales in {path}.hdr)")
    return 0


def _fmt(x):
    x = float(x)
    return "0" if x == 0 else format(x, ".9g")


def cmd_validate(cfg: RunConfig) -> int:
    s = _load_schedule(cfg, check=False)
    diag = validate(s)
    print(diag.report())
    if not diag.ok:
        for c in diag.continuity:
            _say(f"error: {c}")
        return 1
    return 0


def cmd_selftest(cfg: RunConfig) -> int:
    from .acceptance import run_all
    results = run_all(list(cfg.only) or None)
    for r in results:
        print(r.line(), flush=True)
    return 0 if all(r.passed for r in results) else 1


_COMMANDS = {
    "simulate": cmd_simulate, "lz-scan": cmd_lz_scan, "lz-transient": cmd_lz_transient,
    "adiabatic-trace": cmd_adiabatic_trace, "fringe": cmd_fringe, "map": cmd_map,
    "export-waveform": cmd_export_waveform, "validate": cmd_validate, "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
        return _COMMANDS[cfg.subcommand](cfg)
    except (ConfigError, ScheduleError, DslSyntaxError, ValueError) as e:
        _say(f"error: {e}")
        return 1
    except OSError as e:
        _say(f"error: {e}")
        return 2
    except Exception as e:  # runtime failures inside the simulation
        _say(f"error: {type(e).__name__}: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
