import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envtrace.simenv import (
    Acquire,
    AxisConfig,
    ConfigError,
    EnvConfig,
    Environment,
    JitterConfig,
    LimitError,
    MoveAbs,
    MoveRel,
    SetExposure,
    SetPower,
    SetTemperature,
    Sleep,
    SnapshotError,
    StateError,
    StateSnapshot,
    TemperatureConfig,
    TemperatureTimeout,
    WaitTemperature,
    advance,
    apply,
    load_snapshot,
    new_env,
    take_trace,
)
from envtrace.trace import serialize

ACQ = "SIM:DET:Acquire"


def test_new_env_defaults():
    env = new_env()
    assert env.clock == 0
    assert env.temperature_log == [(0.0, 25.0)]
    assert env.event_log == []
    assert env.position("x") == 0.0


def test_duplicate_pv_rejected():
    axes = (AxisConfig("x", "SIM:A"), AxisConfig("y", "SIM:A"))
    with pytest.raises(ConfigError) as exc:
        new_env(EnvConfig(axes=axes))
    assert "axes[1].pv_name" in str(exc.value)


def test_zero_velocity_rejected():
    with pytest.raises(ConfigError) as exc:
        new_env(EnvConfig(axes=(AxisConfig("x", "SIM:X", velocity=0),)))
    assert "velocity" in str(exc.value)


def test_config_round_trip():
    cfg = EnvConfig(jitter=JitterConfig(0.05, 7))
    assert EnvConfig.from_dict(cfg.to_dict()) == cfg
    assert EnvConfig.from_dict(cfg.to_dict()).digest() == cfg.digest()
    with pytest.raises(ConfigError):
        EnvConfig.from_dict({"bogus": 1})


def test_jitter_bound_validation():
    with pytest.raises(ConfigError):
        new_env(EnvConfig().with_jitter(bound=-0.1))
    with pytest.raises(ConfigError):
        new_env(EnvConfig().with_jitter(bound=1.0))


def test_snapshot_suppresses_move_event():
    env = new_env()
    load_snapshot(env, StateSnapshot({"SIM:MTR:X": 2.0}))
    assert apply(env, MoveAbs("x", 2.0)) == []
    assert env.clock == pytest.approx(0.5)  # overhead still elapses


def test_snapshot_errors():
    env = new_env()
    with pytest.raises(SnapshotError):
        load_snapshot(env, StateSnapshot({"FOO": 1.0}))
    apply(env, MoveAbs("x", 1.0))
    with pytest.raises(StateError):
        load_snapshot(env, StateSnapshot({"SIM:MTR:X": 2.0}))


def test_snapshot_temperature_then_setpoint():
    env = new_env()
    load_snapshot(env, StateSnapshot({}, temperature=80.0))
    evs = apply(env, SetTemperature(80))
    assert [(e.pv, e.value) for e in evs] == [("SIM:TEMP:SP", 80.0)]
    assert env.temperature == 80.0
    assert env.temperature_log[0] == (0.0, 80.0)


def test_acquire_pair():
    env = new_env()
    apply(env, SetExposure(1.0))
    evs = apply(env, Acquire())
    assert [(e.pv, e.value) for e in evs] == [(ACQ, 1.0), (ACQ, 0.0)]
    assert evs[0].t == pytest.approx(5.0)
    assert evs[1].t == pytest.approx(6.0)
    assert len(take_trace(env).events) == 3


def test_move_kinematics():
    env = new_env()
    (ev,) = apply(env, MoveAbs("x", 5.8))
    assert ev.pv == "SIM:MTR:X" and ev.value == 5.8
    assert ev.t == pytest.approx(6.3, abs=1e-12)
    (ev,) = apply(env, MoveRel("x", -0.8))
    assert ev.value == pytest.approx(5.0)
    assert ev.t == pytest.approx(6.3 + 1.3)


def test_set_exposure_noop():
    env = new_env()
    apply(env, SetExposure(1.0))
    t = env.clock
    assert apply(env, SetExposure(1.0)) == []
    assert env.clock == t


def test_soft_limit_no_side_effect():
    cfg = EnvConfig(axes=(AxisConfig("x", "SIM:X", soft_limits=(-1.0, 1.0)),))
    env = new_env(cfg)
    with pytest.raises(LimitError):
        apply(env, MoveAbs("x", 2.0))
    assert env.clock == 0 and env.event_log == []


def test_ramp_integration():
    env = new_env()
    apply(env, SetTemperature(55))
    advance(env, 60)
    assert env.temperature == 55.0
    log = env.temperature_log
    assert len(log) == 61
    assert log[-1] == (60.0, 55.0)
    for k, (t, temp) in enumerate(log):
        assert t == pytest.approx(k)
        assert temp == pytest.approx(min(55.0, 25.0 + 0.5 * k))


def test_advance_zero_and_flat():
    env = new_env()
    advance(env, 0)
    assert env.clock == 0 and len(env.temperature_log) == 1
    advance(env, 10)
    assert env.temperature == 25.0
    assert [s[1] for s in env.temperature_log[1:]] == [25.0] * 10


def test_setpoint_only_in_events():
    env = new_env()
    apply(env, SetTemperature(30))
    advance(env, 20)
    tr = take_trace(env)
    assert [e.pv for e in tr.events] == ["SIM:TEMP:SP"]
    assert tr.temperature_log[-1][1] == 30.0


def test_wait_temperature():
    env = new_env()
    apply(env, SetTemperature(35))
    apply(env, WaitTemperature(0.5))
    assert abs(env.temperature - 35) <= 0.5 + 1e-9
    assert env.clock == pytest.approx(19.0)
    apply(env, SetTemperature(100))
    with pytest.raises(TemperatureTimeout):
        apply(env, WaitTemperature(0.5, timeout=10))


def test_power_events():
    env = new_env()
    assert len(apply(env, SetPower(True))) == 1
    assert apply(env, SetPower(True)) == []
    assert apply(env, SetPower(False))[0].value == 0.0


def test_fresh_trace():
    tr = take_trace(new_env())
    assert tr.events == () and tr.temperature_log == ((0.0, 25.0),)


# -- properties --------------------------------------------------------------

axes = st.sampled_from(["x", "y", "z"])
small = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3))
commands = st.one_of(
    st.builds(MoveAbs, axes, small),
    st.builds(MoveRel, axes, small),
    st.builds(SetExposure, st.floats(0, 3).map(lambda v: round(v, 2))),
    st.just(Acquire()),
    st.builds(SetTemperature, st.floats(10, 60).map(lambda v: round(v, 1))),
    st.builds(SetPower, st.booleans()),
    st.builds(Sleep, st.floats(0, 7).map(lambda v: round(v, 2))),
)


def run(cmds, bound=0.0, seed=0, ramp=0.5):
    cfg = EnvConfig(jitter=JitterConfig(bound, seed), temperature=TemperatureConfig(ramp_rate=ramp))
    env = new_env(cfg)
    for c in cmds:
        apply(env, c)
    return env


@settings(max_examples=150, deadline=None)
@given(st.lists(commands, max_size=25), st.floats(0, 0.5), st.integers(0, 2**31))
def test_clock_and_change_detection(cmds, bound, seed):
    env = run(cmds, bound, seed)
    ts = [e.t for e in env.event_log]
    assert ts == sorted(ts)
    log_t = [t for t, _ in env.temperature_log]
    assert all(b > a for a, b in zip(log_t, log_t[1:]))
    last: dict = {}
    for e in env.event_log:
        if e.pv in last:
            assert abs(last[e.pv] - e.value) > 1e-12
        last[e.pv] = e.value
    for pv, v in last.items():
        assert env.pv_table[pv] == v


@settings(max_examples=150, deadline=None)
@given(st.lists(commands, max_size=25), st.floats(0.05, 3), st.floats(0, 0.5), st.integers(0, 99))
def test_temperature_lipschitz(cmds, ramp, bound, seed):
    env = run(cmds, bound, seed, ramp)
    log = env.temperature_log
    for (t0, a), (t1, b) in zip(log, log[1:]):
        assert abs(b - a) <= ramp * (t1 - t0) + 1e-9
        assert t1 - t0 == pytest.approx(1.0, abs=1e-9) or t0 == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(commands, max_size=20), st.floats(0, 0.5), st.integers(0, 2**31))
def test_determinism(cmds, bound, seed):
    a = take_trace(run(cmds, bound, seed))
    b = take_trace(run(cmds, bound, seed))
    assert serialize(a) == serialize(b)


@settings(max_examples=100, deadline=None)
@given(st.lists(commands, max_size=20), st.floats(0.001, 0.5), st.integers(0, 2**31))
def test_jitter_changes_only_times(cmds, bound, seed):
    plain = run(cmds)
    jit = run(cmds, bound, seed)
    assert [(e.pv, e.value) for e in plain.event_log] == [(e.pv, e.value) for e in jit.event_log]
    assert all(math.isfinite(e.t) for e in jit.event_log)
