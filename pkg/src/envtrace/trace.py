"""Execution trace data model and the line-delimited JSON trace format.

A trace file looks like::

    {"format":"envtrace-trace/1","program_digest":"...","seed":0,"duration":12.5,"error":null}
    {"pv":"SIM:DET:Acquire","value":1.0,"t":5.0}
    {"pv":"SIM:DET:Acquire","value":0.0,"t":6.0}
    {"section":"temperature"}
    {"t":0.0,"temp":25.0}
    {"t":1.0,"temp":25.5}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

FORMAT_TAG = "envtrace-trace/1"
TIME_DECIMALS = 6


class TraceFormatError(ValueError):
    """Raised when a serialized trace cannot be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class PVEvent:
    pv: str
    value: float
    t: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.pv}: {self.value}")
        if not (self.t >= 0):
            raise ValueError(f"negative timestamp for {self.pv}: {self.t}")


@dataclass(frozen=True)
class TraceMeta:
    program_digest: str = ""
    seed: int = 0
    duration: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class ExecutionTrace:
    events: tuple[PVEvent, ...] = ()
    temperature_log: tuple[tuple[float, float], ...] = ()
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def pvs(self) -> set[str]:
        return {ev.pv for ev in self.events}


def quantize_time(t: float) -> float:
    return round(t, TIME_DECIMALS) + 0.0


def make_trace(events: Iterable[PVEvent], temperature_log=(), meta: TraceMeta | None = None) -> ExecutionTrace:
    """Build a trace with timestamps snapped to microsecond precision."""
    evs = tuple(PVEvent(e.pv, float(e.value), quantize_time(e.t)) for e in events)
    log = tuple((quantize_time(t), float(v)) for t, v in temperature_log)
    meta = meta or TraceMeta()
    return ExecutionTrace(evs, log, replace(meta, duration=quantize_time(meta.duration)))


@dataclass(frozen=True)
class TraceFilter:
    """PV names to keep. An empty set keeps everything."""

    tracked_pvs: frozenset[str] = frozenset()

    @classmethod
    def of(cls, pvs: Iterable[str] | None) -> "TraceFilter":
        return cls(frozenset(pvs or ()))


def filter_trace(tr: ExecutionTrace, f: TraceFilter) -> ExecutionTrace:
    if not f.tracked_pvs:
        return tr
    kept = tuple(ev for ev in tr.events if ev.pv in f.tracked_pvs)
    return replace(tr, events=kept)


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def serialize(tr: ExecutionTrace) -> bytes:
    m = tr.meta
    lines = [
        _dump(
            {
                "format": FORMAT_TAG,
                "program_digest": m.program_digest,
                "seed": m.seed,
                "duration": quantize_time(m.duration),
                "error": m.error,
            }
        )
    ]
    for ev in tr.events:
        lines.append(_dump({"pv": ev.pv, "value": float(ev.value), "t": quantize_time(ev.t)}))
    lines.append(_dump({"section": "temperature"}))
    for t, temp in tr.temperature_log:
        lines.append(_dump({"t": quantize_time(t), "temp": float(temp)}))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _number(obj: dict, key: str, lineno: int) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TraceFormatError(lineno, f"field {key!r} must be a number")
    v = float(v)
    if not math.isfinite(v):
        raise TraceFormatError(lineno, f"field {key!r} is not finite")
    return v


def deserialize(data: bytes | str) -> ExecutionTrace:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TraceFormatError(1, "empty document")

    parsed = []
    for lineno, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(lineno, f"malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise TraceFormatError(lineno, "expected a JSON object")
        parsed.append((lineno, obj))

    lineno, head = parsed[0]
    if head.get("format") != FORMAT_TAG:
        raise TraceFormatError(lineno, f"missing or unknown format tag (expected {FORMAT_TAG!r})")
    seed = head.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise TraceFormatError(lineno, "field 'seed' must be an integer")
    error = head.get("error")
    if error is not None and not isinstance(error, str):
        raise TraceFormatError(lineno, "field 'error' must be a string or null")
    meta = TraceMeta(
        program_digest=str(head.get("program_digest", "")),
        seed=seed,
        duration=_number(head, "duration", lineno) if "duration" in head else 0.0,
        error=error,
    )

    events: list[PVEvent] = []
    log: list[tuple[float, float]] = []
    in_temperature = False
    last_t = -math.inf
    for lineno, obj in parsed[1:]:
        if "section" in obj:
            if obj["section"] != "temperature" or in_temperature:
                raise TraceFormatError(lineno, "unexpected section marker")
            in_temperature = True
            last_t = -math.inf
            continue
        t = _number(obj, "t", lineno)
        if t < 0:
            raise TraceFormatError(lineno, "negative timestamp")
        if t < last_t:
            raise TraceFormatError(lineno, f"timestamp decreases ({t} < {last_t})")
        last_t = t
        if in_temperature:
            log.append((t, _number(obj, "temp", lineno)))
        else:
            pv = obj.get("pv")
            if not isinstance(pv, str) or not pv:
                raise TraceFormatError(lineno, "field 'pv' must be a non-empty string")
            events.append(PVEvent(pv, _number(obj, "value", lineno), t))
    if not in_temperature:
        raise TraceFormatError(len(lines), "missing temperature section (truncated document?)")
    return ExecutionTrace(tuple(events), tuple(log), meta)


def load_trace(path) -> ExecutionTrace:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def save_trace(tr: ExecutionTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(tr))
