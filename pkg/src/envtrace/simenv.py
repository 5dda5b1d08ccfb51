"""Deterministic, virtually clocked twin of a beamline end station.

The twin replicates the control interface (motor positions, detector
acquisition, a temperature stage) and the state transitions those commands
cause, without any physics. Every write goes through change detection, so a
command that leaves a PV untouched produces no event, the way a channel
monitor would see it.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Union

from .trace import ExecutionTrace, PVEvent, TraceMeta, make_trace

CHANGE_EPS = 1e-12
TIME_EPS = 1e-9


class EnvError(Exception):
    """Base class for everything the twin can raise."""


class ConfigError(EnvError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SnapshotError(EnvError):
    pass


class StateError(EnvError):
    pass


class LimitError(EnvError):
    pass


class TemperatureTimeout(EnvError):
    pass


class CommandError(EnvError):
    pass


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class AxisConfig:
    name: str
    pv_name: str
    velocity: float = 1.0
    move_overhead: float = 0.5
    initial_position: float = 0.0
    soft_limits: tuple[float, float] | None = None


@dataclass(frozen=True)
class DetectorConfig:
    acquire_pv: str = "SIM:DET:Acquire"
    exposure_pv: str = "SIM:DET:AcquireTime"
    trigger_overhead: float = 5.0
    initial_exposure: float = 0.1


@dataclass(frozen=True)
class TemperatureConfig:
    setpoint_pv: str = "SIM:TEMP:SP"
    power_pv: str = "SIM:TEMP:PWR"
    readback_pv: str = "SIM:TEMP:RB"
    ramp_rate: float = 0.5
    sample_interval: float = 1.0
    initial_temperature: float = 25.0
    initial_power: bool = False


@dataclass(frozen=True)
class JitterConfig:
    bound: float = 0.0
    seed: int = 0


def _default_axes() -> tuple[AxisConfig, ...]:
    return tuple(AxisConfig(n, f"SIM:MTR:{n.upper()}") for n in ("x", "y", "z"))


@dataclass(frozen=True)
class EnvConfig:
    axes: tuple[AxisConfig, ...] = field(default_factory=_default_axes)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    temperature: TemperatureConfig = field(default_factory=TemperatureConfig)
    jitter: JitterConfig = field(default_factory=JitterConfig)

    def axis(self, name: str) -> AxisConfig:
        for ax in self.axes:
            if ax.name == name:
                return ax
        raise CommandError(f"unknown axis {name!r}")

    @property
    def axis_names(self) -> list[str]:
        return [ax.name for ax in self.axes]

    @property
    def pv_names(self) -> list[str]:
        d, t = self.detector, self.temperature
        return [ax.pv_name for ax in self.axes] + [
            d.acquire_pv,
            d.exposure_pv,
            t.setpoint_pv,
            t.power_pv,
            t.readback_pv,
        ]

    @property
    def temperature_pvs(self) -> set[str]:
        t = self.temperature
        return {t.setpoint_pv, t.power_pv, t.readback_pv}

    def with_jitter(self, bound: float | None = None, seed: int | None = None) -> "EnvConfig":
        j = self.jitter
        return replace(
            self,
            jitter=JitterConfig(j.bound if bound is None else bound, j.seed if seed is None else seed),
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for ax in d["axes"]:
            if ax["soft_limits"] is not None:
                ax["soft_limits"] = list(ax["soft_limits"])
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EnvConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
        unknown = set(data) - {"axes", "detector", "temperature", "jitter"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        kwargs: dict[str, Any] = {}
        try:
            if "axes" in data:
                axes = []
                for i, ax in enumerate(data["axes"]):
                    ax = dict(ax)
                    if ax.get("soft_limits") is not None:
                        ax["soft_limits"] = tuple(ax["soft_limits"])
                    ax.setdefault("pv_name", f"SIM:MTR:{str(ax.get('name', i)).upper()}")
                    axes.append(AxisConfig(**ax))
                kwargs["axes"] = tuple(axes)
            if "detector" in data:
                kwargs["detector"] = DetectorConfig(**data["detector"])
            if "temperature" in data:
                kwargs["temperature"] = TemperatureConfig(**data["temperature"])
            if "jitter" in data:
                kwargs["jitter"] = JitterConfig(**data["jitter"])
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None
        cfg = cls(**kwargs)
        validate_config(cfg)
        return cfg


def _finite(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"must be a finite number, got {value!r}")
    return float(value)


def validate_config(cfg: EnvConfig) -> None:
    seen: dict[str, str] = {}

    def claim(pv: str, owner: str):
        if not isinstance(pv, str) or not pv:
            raise ConfigError(owner, "pv name must be a non-empty string")
        if pv in seen:
            raise ConfigError(owner, f"pv name {pv!r} already used by {seen[pv]}")
        seen[pv] = owner

    names = set()
    for i, ax in enumerate(cfg.axes):
        where = f"axes[{i}]"
        if not isinstance(ax.name, str) or not ax.name.isidentifier():
            raise ConfigError(f"{where}.name", f"not an identifier: {ax.name!r}")
        if ax.name in names:
            raise ConfigError(f"{where}.name", f"duplicate axis {ax.name!r}")
        names.add(ax.name)
        claim(ax.pv_name, f"{where}.pv_name")
        if _finite(f"{where}.velocity", ax.velocity) <= 0:
            raise ConfigError(f"{where}.velocity", "must be > 0")
        if _finite(f"{where}.move_overhead", ax.move_overhead) < 0:
            raise ConfigError(f"{where}.move_overhead", "must be >= 0")
        pos = _finite(f"{where}.initial_position", ax.initial_position)
        if ax.soft_limits is not None:
            if len(ax.soft_limits) != 2:
                raise ConfigError(f"{where}.soft_limits", "expected [lo, hi]")
            lo = _finite(f"{where}.soft_limits", ax.soft_limits[0])
            hi = _finite(f"{where}.soft_limits", ax.soft_limits[1])
            if not lo < hi:
                raise ConfigError(f"{where}.soft_limits", "need lo < hi")
            if not lo <= pos <= hi:
                raise ConfigError(f"{where}.initial_position", "outside soft limits")

    d = cfg.detector
    claim(d.acquire_pv, "detector.acquire_pv")
    claim(d.exposure_pv, "detector.exposure_pv")
    if _finite("detector.trigger_overhead", d.trigger_overhead) < 0:
        raise ConfigError("detector.trigger_overhead", "must be >= 0")
    if _finite("detector.initial_exposure", d.initial_exposure) < 0:
        raise ConfigError("detector.initial_exposure", "must be >= 0")

    t = cfg.temperature
    claim(t.setpoint_pv, "temperature.setpoint_pv")
    claim(t.power_pv, "temperature.power_pv")
    claim(t.readback_pv, "temperature.readback_pv")
    if _finite("temperature.ramp_rate", t.ramp_rate) <= 0:
        raise ConfigError("temperature.ramp_rate", "must be > 0")
    if _finite("temperature.sample_interval", t.sample_interval) <= 0:
        raise ConfigError("temperature.sample_interval", "must be > 0")
    _finite("temperature.initial_temperature", t.initial_temperature)

    if _finite("jitter.bound", cfg.jitter.bound) < 0:
        raise ConfigError("jitter.bound", "must be >= 0")
    if cfg.jitter.bound >= 1:
        raise ConfigError("jitter.bound", "must be < 1 so durations stay positive")
    if isinstance(cfg.jitter.seed, bool) or not isinstance(cfg.jitter.seed, int):
        raise ConfigError("jitter.seed", "must be an integer")


def load_config(path) -> EnvConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    return EnvConfig.from_dict(data)


# -- commands ---------------------------------------------------------------


@dataclass(frozen=True)
class MoveAbs:
    axis: str
    target: float


@dataclass(frozen=True)
class MoveRel:
    axis: str
    delta: float


@dataclass(frozen=True)
class SetExposure:
    duration: float


@dataclass(frozen=True)
class Acquire:
    pass


@dataclass(frozen=True)
class SetTemperature:
    target: float


@dataclass(frozen=True)
class WaitTemperature:
    tolerance: float
    timeout: float = 3600.0


@dataclass(frozen=True)
class SetPower:
    on: bool


@dataclass(frozen=True)
class Sleep:
    duration: float


Command = Union[MoveAbs, MoveRel, SetExposure, Acquire, SetTemperature, WaitTemperature, SetPower, Sleep]


# -- snapshots --------------------------------------------------------------


@dataclass(frozen=True)
class StateSnapshot:
    pvs: dict[str, float] = field(default_factory=dict)
    temperature: float | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StateSnapshot":
        if not isinstance(data, dict):
            raise SnapshotError("snapshot must be a JSON object")
        pvs = data.get("pvs", {})
        if not isinstance(pvs, dict):
            raise SnapshotError("'pvs' must be an object")
        clean = {}
        for k, v in pvs.items():
            if isinstance(v, bool):
                v = float(v)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise SnapshotError(f"pv {k!r}: value must be a finite number")
            clean[k] = float(v)
        temp = data.get("temperature")
        if temp is not None and (not isinstance(temp, (int, float)) or not math.isfinite(temp)):
            raise SnapshotError("'temperature' must be a finite number")
        return cls(clean, None if temp is None else float(temp))


def load_snapshot_file(path) -> StateSnapshot:
    with open(path) as fh:
        try:
            return StateSnapshot.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"invalid JSON: {exc}") from None


# -- the twin ---------------------------------------------------------------


class Environment:
    """Mutable simulator state. Single owner; not thread-safe."""

    def __init__(self, config: EnvConfig):
        validate_config(config)
        self.config = config
        self.clock = 0.0
        self.event_log: list[PVEvent] = []
        self.rng = random.Random(config.jitter.seed)
        d, t = config.detector, config.temperature
        self.pv_table: dict[str, float] = {ax.pv_name: float(ax.initial_position) for ax in config.axes}
        self.pv_table[d.acquire_pv] = 0.0
        self.pv_table[d.exposure_pv] = float(d.initial_exposure)
        self.pv_table[t.setpoint_pv] = float(t.initial_temperature)
        self.pv_table[t.power_pv] = 1.0 if t.initial_power else 0.0
        self.pv_table[t.readback_pv] = float(t.initial_temperature)
        self.temperature_log: list[tuple[float, float]] = [(0.0, float(t.initial_temperature))]
        self._last_sample = 0

    @property
    def temperature(self) -> float:
        return self.pv_table[self.config.temperature.readback_pv]

    @property
    def setpoint(self) -> float:
        return self.pv_table[self.config.temperature.setpoint_pv]

    def position(self, axis: str) -> float:
        return self.pv_table[self.config.axis(axis).pv_name]

    # state writes

    def _write(self, pv: str, value: float) -> PVEvent | None:
        if abs(self.pv_table[pv] - value) <= CHANGE_EPS:
            return None
        self.pv_table[pv] = value
        ev = PVEvent(pv, value, self.clock)
        self.event_log.append(ev)
        return ev

    def advance(self, dt: float) -> None:
        if dt < 0 or not math.isfinite(dt):
            raise ValueError(f"cannot advance by {dt!r}")
        if dt == 0:
            return
        bound = self.config.jitter.bound
        if bound > 0:
            dt *= 1.0 + self.rng.uniform(-bound, bound)
        t0 = self.clock
        t1 = t0 + dt
        temp0 = self.temperature
        sp = self.setpoint
        rate = self.config.temperature.ramp_rate

        def temp_at(t: float) -> float:
            step = rate * (t - t0)
            if abs(sp - temp0) <= step:
                return sp
            return temp0 + math.copysign(step, sp - temp0)

        interval = self.config.temperature.sample_interval
        k = self._last_sample + 1
        while k * interval <= t1 + TIME_EPS:
            tk = k * interval
            self.temperature_log.append((tk, temp_at(min(max(tk, t0), t1))))
            k += 1
        self._last_sample = k - 1
        self.pv_table[self.config.temperature.readback_pv] = temp_at(t1)
        self.clock = t1

    def apply(self, cmd: Command) -> list[PVEvent]:
        start = len(self.event_log)
        if isinstance(cmd, (MoveAbs, MoveRel)):
            ax = self.config.axis(cmd.axis)
            current = self.pv_table[ax.pv_name]
            if isinstance(cmd, MoveAbs):
                target = _cmd_number("target", cmd.target)
            else:
                target = current + _cmd_number("delta", cmd.delta)
            if ax.soft_limits is not None:
                lo, hi = ax.soft_limits
                if not lo <= target <= hi:
                    raise LimitError(f"axis {ax.name}: target {target} outside soft limits [{lo}, {hi}]")
            self.advance(ax.move_overhead + abs(target - current) / ax.velocity)
            self._write(ax.pv_name, target)
        elif isinstance(cmd, SetExposure):
            duration = _cmd_number("duration", cmd.duration)
            if duration < 0:
                raise CommandError(f"exposure must be >= 0, got {duration}")
            self._write(self.config.detector.exposure_pv, duration)
        elif isinstance(cmd, Acquire):
            det = self.config.detector
            self.advance(det.trigger_overhead)
            self._write(det.acquire_pv, 1.0)
            self.advance(self.pv_table[det.exposure_pv])
            self._write(det.acquire_pv, 0.0)
        elif isinstance(cmd, SetTemperature):
            self._write(self.config.temperature.setpoint_pv, _cmd_number("target", cmd.target))
        elif isinstance(cmd, WaitTemperature):
            self._wait_temperature(cmd)
        elif isinstance(cmd, SetPower):
            self._write(self.config.temperature.power_pv, 1.0 if cmd.on else 0.0)
        elif isinstance(cmd, Sleep):
            duration = _cmd_number("duration", cmd.duration)
            if duration < 0:
                raise CommandError(f"sleep duration must be >= 0, got {duration}")
            self.advance(duration)
        else:
            raise CommandError(f"unsupported command {cmd!r}")
        return self.event_log[start:]

    def _wait_temperature(self, cmd: WaitTemperature) -> None:
        tol = _cmd_number("tolerance", cmd.tolerance)
        timeout = _cmd_number("timeout", cmd.timeout)
        if tol <= 0 or timeout <= 0:
            raise CommandError("wait_temp needs tolerance > 0 and timeout > 0")
        rate = self.config.temperature.ramp_rate
        started = self.clock
        # jitter can undershoot each step, so close the gap iteratively
        for _ in range(200):
            gap = abs(self.temperature - self.setpoint) - tol
            if gap <= TIME_EPS * rate:
                return
            needed = gap / rate
            remaining = timeout - (self.clock - started)
            if needed > remaining + TIME_EPS:
                if remaining > 0:
                    self.advance(remaining)
                raise TemperatureTimeout(
                    f"temperature {self.temperature:.3f} not within {tol} of {self.setpoint} after {timeout} s"
                )
            self.advance(needed)
        raise TemperatureTimeout("temperature wait failed to converge")

    def load_snapshot(self, snap: StateSnapshot) -> None:
        if self.event_log:
            raise StateError("snapshot must be loaded before any events are produced")
        known = set(self.config.pv_names)
        for pv in snap.pvs:
            if pv not in known:
                raise SnapshotError(f"unknown pv {pv!r}")
        for pv, value in snap.pvs.items():
            self.pv_table[pv] = float(value)
        readback = self.config.temperature.readback_pv
        if snap.temperature is not None:
            self.pv_table[readback] = float(snap.temperature)
        if self.temperature_log and self.temperature_log[-1][0] == self.clock:
            self.temperature_log[-1] = (self.clock, self.pv_table[readback])

    def take_trace(self, program_digest: str = "", error: str | None = None) -> ExecutionTrace:
        readback = self.config.temperature.readback_pv
        events = [ev for ev in self.event_log if ev.pv != readback]
        meta = TraceMeta(program_digest, self.config.jitter.seed, round(self.clock, 6), error)
        return make_trace(events, self.temperature_log, meta)


def _cmd_number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise CommandError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def new_env(config: EnvConfig | None = None) -> Environment:
    return Environment(config or EnvConfig())


def load_snapshot(env: Environment, snap: StateSnapshot) -> Environment:
    env.load_snapshot(snap)
    return env


def apply(env: Environment, cmd: Command) -> list[PVEvent]:
    return env.apply(cmd)


def advance(env: Environment, dt: float) -> None:
    env.advance(dt)


def take_trace(env: Environment, program_digest: str = "") -> ExecutionTrace:
    return env.take_trace(program_digest)
