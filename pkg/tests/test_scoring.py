import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from envtrace.dsl import canonicalize
from envtrace.scoring import (
    ScoringConfig,
    TempScore,
    exact_match,
    full_score,
    levenshtein,
    levenshtein_norm,
    score_traces,
    temp_score,
    temperature_involved,
    timing_score,
)
from envtrace.trace import PVEvent, make_trace

from oracles import levenshtein_rec

PERFECT = timing_score([])


def test_identity_timing():
    s = timing_score([(t, t) for t in (0, 1, 3, 7, 8.5)])
    assert s.composite == pytest.approx(1.0) and s.passed


def test_stretch_1_2():
    s = timing_score([(t, 1.2 * t) for t in (0, 2, 3, 7, 11)])
    assert s.r2 == pytest.approx(1.0, abs=1e-12)
    assert s.slope == pytest.approx(1.2, abs=1e-12)
    assert s.rel_duration == pytest.approx(0.2, abs=1e-12)
    assert s.mape == pytest.approx(0.2, abs=1e-12)
    assert abs(s.composite - 0.76) <= 1e-12
    assert s.passed


def test_degenerate_timing():
    assert timing_score([]).passed and timing_score([(3, 9)]).composite == 1.0
    two = timing_score([(0, 0), (1, 1.1)])
    assert two.r2 == 1.0 and two.passed
    flat = timing_score([(5, 1), (5, 2), (5, 3)])
    assert not flat.passed


def test_fixture_timing_and_full(fixture_traces):
    gt, pred = fixture_traces
    b = score_traces(gt, pred)
    assert b.timing.composite == pytest.approx(0.871, abs=0.02)
    assert b.full_score == pytest.approx(0.654, abs=0.02)
    assert b.timing.passed and not b.accuracy and not b.temperature_involved


def test_composite_formula():
    s = timing_score([(0, 0), (1, 2), (2, 2.5), (5, 4)])
    assert abs(s.composite - (0.4 * s.s_r2 + 0.2 * s.s_slope + 0.2 * s.s_duration + 0.2 * s.s_mape)) < 1e-12


def log(values, t0=0.0):
    return [(t0 + k, v) for k, v in enumerate(values)]


def test_temp_identical():
    s = temp_score(log([25, 26, 27]), log([25, 26, 27]))
    assert s.composite == pytest.approx(1.0) and s.passed


def test_temp_offset_15():
    s = temp_score(log([25, 30, 40]), log([40, 45, 55]))
    assert (s.mae, s.final_diff) == (15, 15)
    assert abs(s.composite - math.exp(-1)) < 1e-6 and not s.passed


def test_temp_offset_5():
    s = temp_score(log([25, 30, 40]), log([30, 35, 45]))
    assert abs(s.composite - math.exp(-1 / 3)) < 1e-6 and s.passed


def test_temp_empty_log():
    s = temp_score([], log([25]))
    assert s.composite == 0 and not s.passed


def test_temp_interpolates_on_gt_grid():
    gt = [(0, 0.0), (1, 1.0), (2, 2.0)]
    pred = [(0, 0.0), (2, 2.0)]
    s = temp_score(gt, pred)
    assert s.mae == pytest.approx(0.0) and s.final_diff == 0


def test_full_score_examples():
    b = full_score(0.5, PERFECT, None, False, False)
    assert b.full_score == pytest.approx(0.600, abs=1e-12)
    t = timing_score([(0, 0), (1, 1)])
    t871 = t.__class__(**{**t.__dict__, "composite": 0.871})
    assert full_score(0.6, t871, None, False, False).full_score == pytest.approx(0.6542, abs=1e-9)
    perfect_temp = TempScore(0, 0, 1, 1, 1.0, True)
    b = full_score(1.0, PERFECT, perfect_temp, True, True)
    assert b.full_score == 1.0 and b.accuracy
    with pytest.raises(ValueError):
        full_score(1.0, PERFECT, None, True, True)


def test_config_validation():
    with pytest.raises(ValueError):
        ScoringConfig(w_pv_temp=0.5)
    with pytest.raises(ValueError):
        ScoringConfig(tau_dur=0)


def test_temperature_involved():
    tr = make_trace([PVEvent("SIM:TEMP:SP", 30, 0)], [(0, 25)])
    assert temperature_involved(tr, {"SIM:TEMP:SP"})
    assert not temperature_involved(make_trace([PVEvent("A", 1, 0)], [(0, 25), (1, 25)]), {"SIM:TEMP:SP"})
    assert temperature_involved(make_trace([], [(0, 25), (1, 26)]), set())


def test_exact_match():
    gts = ["for i in range(3) {\n    measure(1)\n}"]
    assert exact_match("for i in range(3) {\nmeasure(1)  # go\n}", gts)
    assert not exact_match("measure(1)\nmeasure(1)\nmeasure(1)", gts)
    assert not exact_match("", gts)


def test_levenshtein_examples():
    assert levenshtein_norm("abc", "abc") == 0
    assert levenshtein_norm("kitten", "sitting") == pytest.approx(3 / 7)
    assert levenshtein_norm("", "abc") == 1.0
    assert levenshtein_norm("", "") == 0.0


def test_levenshtein_oracle():
    rng = random.Random(7)
    for _ in range(3000):
        a = "".join(rng.choice("abc ") for _ in range(rng.randint(0, 10)))
        b = "".join(rng.choice("abc ") for _ in range(rng.randint(0, 10)))
        assert levenshtein(a, b) == levenshtein_rec(a, b)


# traces carry microsecond timestamps, so draw times on that grid
times = st.lists(st.integers(0, 10**9), min_size=3, max_size=20, unique=True).map(lambda v: [x / 1e6 for x in sorted(v)])


@settings(max_examples=300, deadline=None)
@given(times, st.integers(-10**9, 10**9).map(lambda v: v / 1e6), st.integers(-10**9, 10**9).map(lambda v: v / 1e6), st.floats(0.5, 1.5))
def test_timing_shift_invariance(tg, dg, dp, k):
    assume(tg[-1] - tg[0] > 1e-3)
    base = timing_score([(t, k * t) for t in tg])
    shifted = timing_score([(t + dg, k * t + dp) for t in tg])
    for f in ("r2", "slope", "rel_duration", "mape", "composite"):
        assert getattr(shifted, f) == pytest.approx(getattr(base, f), abs=1e-6)
    assert shifted.passed == base.passed or abs(k - 1.2) < 1e-6 or abs(k - 0.8) < 1e-6


@settings(max_examples=300, deadline=None)
@given(times, st.floats(0.01, 5))
def test_timing_scale_law(tg, k):
    assume(min(b - a for a, b in zip(tg, tg[1:])) > 1e-3)
    s = timing_score([(t, k * t) for t in tg])
    assert s.slope == pytest.approx(k, rel=1e-9)
    assert s.r2 == pytest.approx(1.0, abs=1e-9)
    assert s.s_slope == pytest.approx(max(0, 1 - abs(k - 1)), abs=1e-9)
    assert s.s_duration == pytest.approx(max(0, 1 - abs(k - 1) / 0.25), abs=1e-9)
    assert s.s_mape == pytest.approx(max(0, 1 - abs(k - 1)), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(1e-3, 10))
def test_temp_monotone(mae, fd, d):
    a = temp_score([(0, 0), (1, 0)], [(0, mae), (1, fd)])
    b = temp_score([(0, 0), (1, 0)], [(0, mae + d), (1, fd)])
    assert b.s_mae < a.s_mae or a.s_mae == 0
    assert 0 < a.composite <= 1


rate = st.floats(0, 1)


@settings(max_examples=300, deadline=None)
@given(rate, times, st.floats(0.5, 1.5), st.booleans())
def test_full_score_bounds(r, tg, k, involved):
    t = timing_score([(x, k * x) for x in tg])
    tmp = TempScore(0, 0, 1, 1, 1, True) if involved else None
    b = full_score(r, t, tmp, involved, r == 1)
    assert 0 <= b.full_score <= 1
    if b.full_score == 1:
        assert b.pv_match_rate == 1
    if b.accuracy:
        assert b.exact_pv_match


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.integers(0, 2)), min_size=1, max_size=10), st.integers(0, 10))
def test_accuracy_false_under_insertion(pairs, where):
    gt = make_trace([PVEvent(n, v, float(i)) for i, (n, v) in enumerate(pairs)])
    assert score_traces(gt, gt).accuracy
    evs = list(gt.events)
    pos = min(where, len(evs))
    t = evs[pos - 1].t if pos else 0.0
    evs.insert(pos, PVEvent("Z", 9, t))
    shifted = [PVEvent(e.pv, e.value, e.t) for e in evs]
    assert not score_traces(gt, make_trace(shifted)).accuracy


@settings(max_examples=300, deadline=None)
@given(st.text("ab c\n#", max_size=10), st.text("ab c\n#", max_size=10))
def test_levenshtein_symmetric(a, b):
    assert levenshtein_norm(a, b) == levenshtein_norm(b, a)
    assert (levenshtein_norm(a, b) == 0) == (canonicalize(a) == canonicalize(b))
