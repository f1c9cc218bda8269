"""Text format for pulse programs: one event per line, ``#`` starts a comment.

::

    pulse <flip_deg> <x|y|-x|-y|phase_deg>
    delay <s>
    cpmg tau=<s> n=<int> [composite]
    grad area=<T s/m> [bipolar]
    lock mode=<ideal|waltz16> t=<s>
    store t=<s> [lock=<mode>]
    acquire

The serializer writes the canonical form: lower-case keywords, keys in the
order above, floats as ``repr`` (so values survive the round trip exactly)
and named phases for multiples of 90 degrees.
"""

from __future__ import annotations

import re

from .errors import ProgramError
from .program import Acquire, CpmgBlock, Delay, Gradient, Lock, Pulse, PulseProgram, StorageMarker, check_event

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")
_INT = re.compile(r"[+-]?\d+\Z")
_TOKEN = re.compile(r"\S+")
PHASE_NAMES = {"x": 0.0, "y": 90.0, "-x": 180.0, "-y": 270.0}
_PHASE_TEXT = {v: k for k, v in PHASE_NAMES.items()}

# keyword -> (required keys, optional keys, allowed bare flags)
_KEYED = {
    "cpmg": (("tau", "n"), (), ("composite",)),
    "grad": (("area",), (), ("bipolar",)),
    "lock": (("mode", "t"), (), ()),
    "store": (("t",), ("lock",), ()),
}


class _Line:
    def __init__(self, lineno: int, tokens: list[tuple[int, str]]):
        self.lineno = lineno
        self.tokens = tokens

    def error(self, msg: str, col: int | None = None) -> ProgramError:
        return ProgramError(msg, line=self.lineno, column=col)


def _number(line: _Line, col: int, text: str, what: str) -> float:
    if not _NUMBER.match(text):
        raise line.error(f"expected a number for {what}, got {text!r}", col)
    return float(text)


def _integer(line: _Line, col: int, text: str, what: str) -> int:
    if not _INT.match(text):
        raise line.error(f"expected an integer for {what}, got {text!r}", col)
    return int(text)


def _phase(line: _Line, col: int, text: str) -> float:
    low = text.lower()
    if low in PHASE_NAMES:
        return PHASE_NAMES[low]
    return _number(line, col, text, "pulse phase")


def _positional(line: _Line, n: int):
    kw_col, kw = line.tokens[0]
    args = line.tokens[1:]
    if len(args) != n:
        last_col, last = line.tokens[-1]
        col = args[n][0] if len(args) > n else last_col + len(last)  # just past the last token
        raise line.error(f"'{kw}' takes {n} argument(s), got {len(args)}", col)
    return args


def _keyed(line: _Line):
    kw = line.tokens[0][1].lower()
    required, optional, flags = _KEYED[kw]
    values, seen_flags = {}, set()
    for col, tok in line.tokens[1:]:
        if "=" in tok:
            key, _, val = tok.partition("=")
            key = key.lower()
            if key not in required and key not in optional:
                raise line.error(f"unknown key {key!r} for '{kw}'", col)
            if key in values:
                raise line.error(f"duplicate key {key!r}", col)
            if not val:
                raise line.error(f"missing value for {key!r}", col + len(key) + 1)
            values[key] = (col + len(key) + 1, val)
        else:
            flag = tok.lower()
            if flag not in flags:
                raise line.error(f"unknown flag {tok!r} for '{kw}'", col)
            if flag in seen_flags:
                raise line.error(f"duplicate flag {tok!r}", col)
            seen_flags.add(flag)
    for key in required:
        if key not in values:
            raise line.error(f"'{kw}' needs {key}=", line.tokens[0][0])
    return values, seen_flags


def _event(line: _Line):
    col, kw = line.tokens[0]
    kw = kw.lower()
    if kw == "pulse":
        (c1, flip), (c2, phase) = _positional(line, 2)
        return Pulse(_number(line, c1, flip, "flip angle"), _phase(line, c2, phase))
    if kw == "delay":
        ((c1, t),) = _positional(line, 1)
        return Delay(_number(line, c1, t, "delay"))
    if kw == "acquire":
        _positional(line, 0)
        return Acquire()
    if kw not in _KEYED:
        raise line.error(f"unknown event {line.tokens[0][1]!r}", col)
    values, flags = _keyed(line)
    if kw == "cpmg":
        (ct, tau), (cn, n) = values["tau"], values["n"]
        return CpmgBlock(_number(line, ct, tau, "tau"), _integer(line, cn, n, "n"), "composite" in flags)
    if kw == "grad":
        ca, area = values["area"]
        return Gradient(_number(line, ca, area, "area"), "bipolar" in flags)
    if kw == "lock":
        ct, t = values["t"]
        return Lock(values["mode"][1].lower(), _number(line, ct, t, "t"))
    ct, t = values["t"]
    lock = values["lock"][1].lower() if "lock" in values else None
    return StorageMarker(_number(line, ct, t, "t"), lock)


def parse_program(text: str, label: str = "") -> PulseProgram:
    """Parse pulse-language ``text``.

    Syntax errors carry the 1-based line and column; semantic errors
    (negative times, unknown lock modes, acquire not last) also carry the
    event index.
    """
    events, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        tokens = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(body)]
        if not tokens:
            continue
        line = _Line(lineno, tokens)
        try:
            ev = _event(line)
        except ProgramError:
            raise
        except ValueError as exc:  # raised by event constructors
            raise line.error(str(exc), tokens[0][0]) from None
        try:
            check_event(ev, len(events))
        except ProgramError as exc:
            raise ProgramError(_bare(exc), line=lineno, column=tokens[0][0], index=len(events)) from None
        if events and isinstance(events[-1], Acquire):
            raise ProgramError("acquire must be the last event (at most one per program)",
                               line=lines[-1], column=1, index=len(events) - 1)
        events.append(ev)
        lines.append(lineno)
    return PulseProgram(tuple(events), label=label)


def _bare(exc: ProgramError) -> str:
    msg = str(exc)
    return msg.split(": ", 1)[1] if exc.index is not None and ": " in msg else msg


def _num(x) -> str:
    return repr(float(x))


def serialize_event(ev) -> str:
    if isinstance(ev, Pulse):
        phase = _PHASE_TEXT.get(ev.phase, _num(ev.phase))
        return f"pulse {_num(ev.flip)} {phase}"
    if isinstance(ev, Delay):
        return f"delay {_num(ev.t)}"
    if isinstance(ev, CpmgBlock):
        return f"cpmg tau={_num(ev.tau)} n={int(ev.n)}" + (" composite" if ev.composite else "")
    if isinstance(ev, Gradient):
        return f"grad area={_num(ev.area)}" + (" bipolar" if ev.bipolar else "")
    if isinstance(ev, Lock):
        return f"lock mode={ev.mode} t={_num(ev.t)}"
    if isinstance(ev, StorageMarker):
        return f"store t={_num(ev.t)}" + (f" lock={ev.lock}" if ev.lock else "")
    if isinstance(ev, Acquire):
        return "acquire"
    raise ProgramError(f"cannot serialize {type(ev).__name__}")


def serialize(program: PulseProgram) -> str:
    """Canonical text of ``program``; ``parse_program(serialize(p)) == p``."""
    return "".join(serialize_event(ev) + "\n" for ev in program.events)


def canonical(text: str) -> str:
    return serialize(parse_program(text))
