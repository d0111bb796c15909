"""Line-oriented schedule language.

One directive per line, '#' starts a comment::

    stage 1
    prep theta 0 -> 1.39592 rate pi per 200us bmag 50kHz phi 0
    sweep omega 49.24kHz -> -49.24kHz delta 8.68kHz for 90us
    ramp delta 8.68kHz -> 0kHz omega -49.24kHz for 40us
    ramp phi 0 -> $phi0 for 400us
    hold omega -49.24kHz delta 0kHz phi 0 for 5us
    echo azimuth 0
    jump phi $phi0

Values are single tokens without spaces: an arithmetic expression (``pi``,
``$phi0``, + - * /, parentheses, sqrt/atan/atan2/sin/cos) immediately
followed by a unit: Hz, kHz, MHz or rad/s
for frequencies (ordinary frequencies are multiplied by 2 pi), s/ms/us/ns for
times, rad (optional) for angles. Rates are ``<angle> per <time>`` or a value
in rad/s, rad/ms, rad/us. Omitted field parameters are taken from the end of
the previous segment.
"""
from __future__ import annotations

import ast
import math
import operator
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .bloch import FieldPoint
from .schedule import (DeltaRamp, EchoPulse, Hold, OmegaSweep, PhiJump, PhiRamp, Schedule,
                       ScheduleError, ThetaRamp, validate)
from .units import TWO_PI, khz, to_khz, to_us

RENDER_DIGITS = 12

FREQ_UNITS = {"Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "rad/s": 1.0}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
ANGLE_UNITS = {"rad": 1.0, "": 1.0}
_KHZ_PER = {"Hz": 1e-3, "kHz": 1.0, "MHz": 1e3}
RATE_UNITS = {"rad/s": 1.0, "rad/ms": 1e3, "rad/us": 1e6}
_ALL_UNITS = sorted(set(FREQ_UNITS) | set(TIME_UNITS) | set(RATE_UNITS) | {"rad"},
                    key=len, reverse=True)

_FUNCS = {"sqrt": math.sqrt, "atan": math.atan, "atan2": math.atan2, "sin": math.sin,
          "cos": math.cos}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv}


class DslSyntaxError(ValueError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class _Undefined(Exception):
    pass


def _eval_expr(text: str, variables: Dict[str, float]) -> float:
    src = re.sub(r"\$([A-Za-z_]\w*)", r"__var_\1", text)
    tree = ast.parse(src, mode="eval")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return math.pi
            if node.id.startswith("__var_"):
                name = node.id[len("__var_"):]
                if name not in variables:
                    raise _Undefined(name)
                return float(variables[name])
            raise ValueError(f"unknown name {node.id!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*(ev(a) for a in node.args))
        raise ValueError("unsupported expression")

    return ev(tree)


def _split_unit(token: str) -> Tuple[str, str]:
    for u in _ALL_UNITS:
        if token.endswith(u) and len(token) > len(u):
            head = token[: -len(u)]
            # 'rad' inside a rate unit is part of the unit, not the expression
            if head.endswith("rad") and u.startswith("/"):
                continue
            return head, u
    return token, ""


class _Line:
    """Tokenized directive with column bookkeeping."""

    def __init__(self, text, lineno):
        self.lineno = lineno
        self.tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", text)]
        self.pos = 0

    def error(self, msg, col=None):
        if col is None:
            col = self.tokens[self.pos][1] if self.pos < len(self.tokens) else \
                (self.tokens[-1][1] + len(self.tokens[-1][0]) if self.tokens else 1)
        return DslSyntaxError(msg, self.lineno, col)

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self, expected=None):
        if self.pos >= len(self.tokens):
            raise self.error(f"expected {expected!r}" if expected else "unexpected end of line")
        tok, col = self.tokens[self.pos]
        if expected is not None and tok != expected:
            raise self.error(f"expected {expected!r}, found {tok!r}")
        self.pos += 1
        return tok, col

    def done(self):
        if self.pos < len(self.tokens):
            raise self.error(f"unexpected token {self.tokens[self.pos][0]!r}")


class _Parser:
    def __init__(self, variables):
        self.variables = dict(variables or {})
        self.rate_pair = None
        self.segments: List = []
        self.labels: List[str] = []
        self.label = ""
        self.current = FieldPoint(0.0, 0.0, 0.0)
        self.bmag: Optional[float] = None

    # value readers -------------------------------------------------------
    def _value(self, line, units: Dict[str, float], kind: str) -> float:
        tok, col = line.take()
        expr, unit = _split_unit(tok)
        if unit == "":
            m = re.match(r"^(.*[\d).])([A-Za-z/]+)$", tok)
            if m and m.group(2) not in ("pi",):
                unit = m.group(2)
        if unit not in units:
            if unit == "":
                raise ScheduleError(f"missing unit on {kind} {tok!r} (line {line.lineno})",
                                    len(self.segments))
            raise ScheduleError(f"unknown unit {unit!r} for {kind} {tok!r} (line {line.lineno})",
                                len(self.segments))
        try:
            v = _eval_expr(expr, self.variables)
        except _Undefined as e:
            raise ScheduleError(f"undefined variable ${e.args[0]} (line {line.lineno})",
                                len(self.segments)) from None
        except (SyntaxError, ValueError, TypeError, ZeroDivisionError):
            raise DslSyntaxError(f"malformed value {tok!r}", line.lineno, col) from None
        if units is FREQ_UNITS and unit in _KHZ_PER:
            # same operation order as units.khz, so defaults match bit for bit
            return khz(v * _KHZ_PER[unit])
        return v * units[unit]

    def freq(self, line):
        return self._value(line, FREQ_UNITS, "frequency")

    def time(self, line):
        return self._value(line, TIME_UNITS, "time")

    def angle(self, line):
        return self._value(line, ANGLE_UNITS, "angle")

    def number(self, line):
        return self._value(line, {"": 1.0}, "number")

    def rate(self, line):
        save = line.pos
        line.take()
        if line.peek() == "per":
            line.pos = save
            a = self.angle(line)
            line.take("per")
            t = self.time(line)
            if t == 0:
                raise ScheduleError(f"zero time in rate (line {line.lineno})", len(self.segments))
            self.rate_pair = (a, t)
            return a / t
        line.pos = save
        return self._value(line, RATE_UNITS, "rate")

    def options(self, line, readers):
        out = {}
        while line.peek() is not None and line.peek() in readers:
            key, _ = line.take()
            if key in out:
                raise line.error(f"duplicate keyword {key!r}")
            out[key] = readers[key](line)
        return out

    # directives ----------------------------------------------------------
    def add(self, seg):
        self.segments.append(seg)
        self.labels.append(self.label)
        if isinstance(seg, PhiJump):
            self.current = FieldPoint(self.current.omega, self.current.delta, seg.phi_new)
        elif not isinstance(seg, EchoPulse):
            self.current = seg.end()

    def directive(self, line):
        head, col = line.take()
        if head == "set":
            name, ncol = line.take()
            if name == "bmag":
                self.bmag = self.freq(line)
            elif name == "phi0":
                self.variables.setdefault("phi0", self.angle(line))
            else:
                raise DslSyntaxError(f"unknown setting {name!r}", line.lineno, ncol)
        elif head == "stage":
            self.label, _ = line.take()
        elif head == "prep":
            line.take("theta")
            a = self.angle(line)
            line.take("->")
            b = self.angle(line)
            line.take("rate")
            self.rate_pair = None
            r = self.rate(line)
            opt = self.options(line, {"bmag": self.freq, "phi": self.angle,
                                      "scale": self.number, "offset": self.freq})
            cur = self.current
            bmag = opt.get("bmag", self.bmag if self.bmag is not None else cur.magnitude)
            phi = opt.get("phi", cur.phi if cur.omega >= 0 else cur.phi + math.pi)
            if a == b:
                dur = 0.0
            else:
                if not r > 0:
                    raise ScheduleError(f"rotation rate must be positive (line {line.lineno})",
                                        len(self.segments))
                dur = abs(b - a) / r
                # "<span> per <T>" naming this ramp's own span means exactly T
                if self.rate_pair and math.isclose(abs(b - a), self.rate_pair[0], rel_tol=1e-9):
                    dur = self.rate_pair[1]
            self.add(ThetaRamp(bmag, a, b, dur, phi, opt.get("scale", 1.0), opt.get("offset", 0.0)))
        elif head == "sweep":
            line.take("omega")
            a = self.freq(line)
            line.take("->")
            b = self.freq(line)
            line.take("delta")
            d = self.freq(line)
            line.take("for")
            T = self.time(line)
            opt = self.options(line, {"phi": self.angle})
            self.add(OmegaSweep(a, b, d, opt.get("phi", self.current.phi), T))
        elif head == "ramp":
            what, wcol = line.take()
            if what == "delta":
                a = self.freq(line)
                line.take("->")
                b = self.freq(line)
                opt = self.options(line, {"omega": self.freq, "phi": self.angle})
                line.take("for")
                T = self.time(line)
                opt.update(self.options(line, {"phi": self.angle}))
                self.add(DeltaRamp(opt.get("omega", self.current.omega), a, b,
                                   opt.get("phi", self.current.phi), T))
            elif what == "phi":
                a = self.angle(line)
                line.take("->")
                b = self.angle(line)
                opt = self.options(line, {"omega": self.freq, "delta": self.freq})
                line.take("for")
                T = self.time(line)
                opt.update(self.options(line, {"omega": self.freq, "delta": self.freq}))
                self.add(PhiRamp(opt.get("omega", self.current.omega),
                                 opt.get("delta", self.current.delta), a, b, T))
            else:
                raise DslSyntaxError(f"unknown ramp target {what!r}", line.lineno, wcol)
        elif head == "hold":
            opt = self.options(line, {"omega": self.freq, "delta": self.freq, "phi": self.angle})
            line.take("for")
            T = self.time(line)
            cur = self.current
            self.add(Hold(FieldPoint(opt.get("omega", cur.omega), opt.get("delta", cur.delta),
                                     opt.get("phi", cur.phi)), T))
        elif head == "echo":
            opt = self.options(line, {"azimuth": self.angle})
            self.add(EchoPulse(opt.get("azimuth", 0.0)))
        elif head == "jump":
            line.take("phi")
            self.add(PhiJump(self.angle(line)))
        else:
            raise DslSyntaxError(f"unknown directive {head!r}", line.lineno, col)
        line.done()


def parse_schedule(text: str, variables: Optional[Dict[str, float]] = None,
                   check_continuity: bool = True) -> Schedule:
    """Parse DSL text into a Schedule.

    ``variables`` binds ``$phi0`` (and any other ``$name``). Continuity
    violations are reported as ScheduleError naming the segment.
    """
    p = _Parser(variables)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        line = _Line(body, lineno)
        try:
            p.directive(line)
        except ScheduleError as e:
            if e.segment is None:
                raise ScheduleError(f"{e} (line {lineno})", len(p.segments)) from None
            raise
    if not p.segments:
        raise ScheduleError("schedule has no segments")
    s = Schedule(tuple(p.segments), tuple(p.labels))
    if check_continuity:
        diag = validate(s)
        if diag.continuity:
            c = diag.continuity[0]
            raise ScheduleError(str(c), c.after)
    return s


# ------------------------------------------------------------------- rendering


def _num(v: float) -> str:
    if v == 0:
        return "0"
    return format(v, f".{RENDER_DIGITS}g")


def _f(v):
    return _num(to_khz(v)) + "kHz"


def _t(v):
    return _num(to_us(v)) + "us"


def _a(v):
    return _num(v)


def _render_segment(seg) -> str:
    if isinstance(seg, ThetaRamp):
        if seg.duration == 0:
            rate = "1rad/s"
        else:
            span = float(_a(seg.theta_end)) - float(_a(seg.theta_start))
            rate = f"{_a(abs(span))} per {_t(seg.duration)}"
        out = (f"prep theta {_a(seg.theta_start)} -> {_a(seg.theta_end)} rate {rate} "
               f"bmag {_f(seg.b_mag)} phi {_a(seg.phi)}")
        if seg.omega_scale != 1.0:
            out += f" scale {_num(seg.omega_scale)}"
        if seg.delta_offset != 0.0:
            out += f" offset {_f(seg.delta_offset)}"
        return out
    if isinstance(seg, OmegaSweep):
        return (f"sweep omega {_f(seg.omega_start)} -> {_f(seg.omega_end)} delta {_f(seg.delta)} "
                f"for {_t(seg.duration)} phi {_a(seg.phi)}")
    if isinstance(seg, DeltaRamp):
        return (f"ramp delta {_f(seg.delta_start)} -> {_f(seg.delta_end)} omega {_f(seg.omega)} "
                f"for {_t(seg.duration)} phi {_a(seg.phi)}")
    if isinstance(seg, PhiRamp):
        return (f"ramp phi {_a(seg.phi_start)} -> {_a(seg.phi_end)} omega {_f(seg.omega)} "
                f"delta {_f(seg.delta)} for {_t(seg.duration)}")
    if isinstance(seg, Hold):
        f = seg.field
        return f"hold omega {_f(f.omega)} delta {_f(f.delta)} phi {_a(f.phi)} for {_t(seg.duration)}"
    if isinstance(seg, EchoPulse):
        return f"echo azimuth {_a(seg.axis_azimuth)}"
    if isinstance(seg, PhiJump):
        return f"jump phi {_a(seg.phi_new)}"
    raise TypeError(f"cannot render {type(seg).__name__}")


def render(s: Schedule) -> str:
    """Serialize a schedule; the output is deterministic to the byte."""
    lines, label = [], None
    for seg, lab in zip(s.segments, s.labels):
        if lab != label and lab:
            lines.append(f"stage {lab}")
        label = lab
        lines.append(_render_segment(seg))
    return "\n".join(lines) + "\n"


_KINDS = {"frequency": FREQ_UNITS, "time": TIME_UNITS, "angle": ANGLE_UNITS}


def parse_quantity(text: str, kind: str, default_unit: Optional[str] = None,
                   variables: Optional[Dict[str, float]] = None) -> float:
    """One value in SI angular units, e.g. ``parse_quantity("157us", "time")``.

    ``kind`` is frequency, time, angle or rate. A bare number takes
    ``default_unit``. Rates may be written ``<angle> per <time>``.
    """
    text = text.strip()
    if kind not in _KINDS and kind != "rate":
        raise ValueError(f"unknown quantity kind {kind!r}")
    if default_unit is not None and re.fullmatch(r"[-+0-9.eE*/()pi ]+", text) \
            and " per " not in text:
        text = text.replace(" ", "") + default_unit
    p = _Parser(variables)
    line = _Line(text, 1)
    try:
        if kind == "rate":
            v = p.rate(line)
        else:
            v = p._value(line, _KINDS[kind], kind)
        line.done()
    except ScheduleError as e:
        raise ValueError(re.sub(r" \(line 1\)$", "", e.message)) from None
    except DslSyntaxError as e:
        raise ValueError(f"bad {kind} {text!r}: {e.args[0]}") from None
    return v


GOLDEN_PATH = Path(__file__).with_name("data") / "glzs.seq"


def load_default(phi0: float = 0.0) -> Schedule:
    """The shipped default interferometer schedule with ``$phi0`` bound."""
    return parse_schedule(GOLDEN_PATH.read_text(encoding="utf-8"), {"phi0": phi0})
