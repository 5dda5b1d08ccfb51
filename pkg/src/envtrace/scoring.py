"""Component scores, the weighted full score, the strict accuracy verdict,
and the two string baselines (exact match, normalized Levenshtein)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .align import compare, exact_pv_match, matched_timestamps
from .dsl.canonical import canonicalize
from .trace import ExecutionTrace

INTERVAL_EPS = 1e-9
# thresholds are inclusive; absorb float error from the regression arithmetic
BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class Thresholds:
    r2_min: float = 0.90
    slope_lo: float = 0.8
    slope_hi: float = 1.2
    duration_tol: float = 0.25
    mape_tol: float = 1.0
    temp_mae_max: float = 5.0
    temp_final_max: float = 5.0


@dataclass(frozen=True)
class ScoringConfig:
    w_pv_temp: float = 0.6
    w_pv: float = 0.8
    w_timing: float = 0.2
    w_temp: float = 0.2
    tau_dur: float = 0.25
    tau_mape: float = 1.0
    temp_scale: float = 15.0
    value_tol: float = 1e-3
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if abs(self.w_pv_temp + self.w_timing + self.w_temp - 1) > 1e-12:
            raise ValueError("temperature-branch weights must sum to 1")
        if abs(self.w_pv + self.w_timing - 1) > 1e-12:
            raise ValueError("no-temperature weights must sum to 1")
        if min(self.tau_dur, self.tau_mape, self.temp_scale, self.value_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class TimingScore:
    r2: float
    slope: float
    rel_duration: float
    mape: float
    s_r2: float
    s_slope: float
    s_duration: float
    s_mape: float
    composite: float
    passed: bool
    n_pairs: int


@dataclass(frozen=True)
class TempScore:
    mae: float
    final_diff: float
    s_mae: float
    s_final: float
    composite: float
    passed: bool


@dataclass(frozen=True)
class ScoreBreakdown:
    pv_match_rate: float
    exact_pv_match: bool
    timing: TimingScore
    temp: TempScore | None
    temperature_involved: bool
    full_score: float
    accuracy: bool
    n_value_matches: int = 0
    n_total_pairs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _perfect_timing(n: int) -> TimingScore:
    return TimingScore(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, True, n)


def timing_score(pairs: Sequence[tuple[float, float]], cfg: ScoringConfig | None = None) -> TimingScore:
    """Score the pacing of matched events: regress predicted on ground-truth
    timestamps (both zero-based) and combine R², slope, duration and
    interval MAPE."""
    cfg = cfg or ScoringConfig()
    th = cfg.thresholds
    n = len(pairs)
    if n <= 1:
        return _perfect_timing(n)

    tg = np.array([p[0] for p in pairs], dtype=float)
    tp = np.array([p[1] for p in pairs], dtype=float)
    tg -= tg[0]
    tp -= tp[0]

    gx = tg - tg.mean()
    sxx = float(gx @ gx)
    if sxx == 0.0:
        # all ground-truth events simultaneous: the fit is only defined if prediction agrees
        same = bool(np.all(tp == 0.0))
        slope, r2 = (1.0, 1.0) if same else (0.0, 0.0)
    else:
        slope = float(gx @ (tp - tp.mean())) / sxx
        intercept = float(tp.mean() - slope * tg.mean())
        if n == 2:
            r2 = 1.0
        else:
            resid = tp - (intercept + slope * tg)
            py = tp - tp.mean()
            ss_tot = float(py @ py)
            ss_res = float(resid @ resid)
            r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    dur_gt, dur_pred = float(tg[-1]), float(tp[-1])
    if dur_gt > 0:
        rel_dur = abs(dur_pred - dur_gt) / dur_gt
    else:
        rel_dur = 0.0 if dur_pred == 0 else math.inf

    ig, ip = np.diff(tg), np.diff(tp)
    keep = ig > INTERVAL_EPS
    mape = float(np.mean(np.abs(ip[keep] - ig[keep]) / ig[keep])) if keep.any() else 0.0

    s_r2 = r2
    s_slope = max(0.0, 1.0 - abs(slope - 1.0))
    s_duration = max(0.0, 1.0 - rel_dur / cfg.tau_dur)
    s_mape = max(0.0, 1.0 - mape / cfg.tau_mape)
    composite = 0.4 * s_r2 + 0.2 * s_slope + 0.2 * s_duration + 0.2 * s_mape
    eps = BOUNDARY_EPS
    passed = (
        r2 >= th.r2_min - eps
        and th.slope_lo - eps <= slope <= th.slope_hi + eps
        and rel_dur <= th.duration_tol + eps
        and mape <= th.mape_tol + eps
    )
    return TimingScore(r2, slope, rel_dur, mape, s_r2, s_slope, s_duration, s_mape, composite, passed, n)


def _temp_from_errors(mae: float, final_diff: float, cfg: ScoringConfig) -> TempScore:
    s_mae = math.exp(-mae / cfg.temp_scale)
    s_final = math.exp(-final_diff / cfg.temp_scale)
    th = cfg.thresholds
    passed = mae <= th.temp_mae_max + BOUNDARY_EPS and final_diff <= th.temp_final_max + BOUNDARY_EPS
    return TempScore(mae, final_diff, s_mae, s_final, 0.7 * s_mae + 0.3 * s_final, passed)


def temp_score(gt_log, pred_log, cfg: ScoringConfig | None = None) -> TempScore:
    """Compare two sampled temperature profiles.

    The predicted profile is interpolated onto the ground-truth sample times
    that fall inside both logs' time span.
    """
    cfg = cfg or ScoringConfig()
    if not len(gt_log) or not len(pred_log):
        return TempScore(math.inf, math.inf, 0.0, 0.0, 0.0, False)
    gt = np.asarray(gt_log, dtype=float).reshape(-1, 2)
    pr = np.asarray(pred_log, dtype=float).reshape(-1, 2)
    lo = max(gt[0, 0], pr[0, 0])
    hi = min(gt[-1, 0], pr[-1, 0])
    final_diff = abs(float(gt[-1, 1]) - float(pr[-1, 1]))
    grid = gt[(gt[:, 0] >= lo) & (gt[:, 0] <= hi)]
    if len(grid):
        pred_on_grid = np.interp(grid[:, 0], pr[:, 0], pr[:, 1])
        mae = float(np.mean(np.abs(grid[:, 1] - pred_on_grid)))
    else:
        mae = final_diff
    return _temp_from_errors(mae, final_diff, cfg)


def full_score(
    pv_match_rate: float,
    timing: TimingScore,
    temp: TempScore | None,
    temperature_involved: bool,
    exact: bool,
    cfg: ScoringConfig | None = None,
    n_value_matches: int = 0,
    n_total_pairs: int = 0,
) -> ScoreBreakdown:
    cfg = cfg or ScoringConfig()
    if temperature_involved:
        if temp is None:
            raise ValueError("temperature score required when temperature is involved")
        score = cfg.w_pv_temp * pv_match_rate + cfg.w_timing * timing.composite + cfg.w_temp * temp.composite
        accuracy = exact and timing.passed and temp.passed
    else:
        score = cfg.w_pv * pv_match_rate + cfg.w_timing * timing.composite
        accuracy = exact and timing.passed
    score = min(1.0, max(0.0, score))
    return ScoreBreakdown(
        pv_match_rate,
        exact,
        timing,
        temp,
        temperature_involved,
        score,
        accuracy,
        n_value_matches,
        n_total_pairs,
    )


def temperature_involved(gt: ExecutionTrace, temperature_pvs: set[str]) -> bool:
    """True when the ground truth touches the temperature stage or its log moves."""
    if any(ev.pv in temperature_pvs for ev in gt.events):
        return True
    temps = [v for _, v in gt.temperature_log]
    return bool(temps) and max(temps) - min(temps) > 1e-12


def score_traces(
    gt: ExecutionTrace,
    pred: ExecutionTrace,
    cfg: ScoringConfig | None = None,
    temperature_pvs: set[str] = frozenset(),
    involved: bool | None = None,
) -> ScoreBreakdown:
    """Align two traces and compute every score component."""
    cfg = cfg or ScoringConfig()
    report = compare(gt.events, pred.events, cfg.value_tol)
    timing = timing_score(matched_timestamps(report, gt.events, pred.events), cfg)
    if involved is None:
        involved = temperature_involved(gt, set(temperature_pvs))
    temp = temp_score(gt.temperature_log, pred.temperature_log, cfg) if involved else None
    exact = exact_pv_match(gt.events, pred.events, cfg.value_tol)
    return full_score(
        report.rate, timing, temp, involved, exact, cfg, report.n_value_matches, report.n_total_pairs
    )


def zero_breakdown(involved: bool) -> ScoreBreakdown:
    timing = TimingScore(0.0, 0.0, math.inf, math.inf, 0.0, 0.0, 0.0, 0.0, 0.0, False, 0)
    temp = TempScore(math.inf, math.inf, 0.0, 0.0, 0.0, False) if involved else None
    return ScoreBreakdown(0.0, False, timing, temp, involved, 0.0, False)


# -- string baselines -------------------------------------------------------


def exact_match(candidate: str, ground_truths: Sequence[str]) -> bool:
    cand = canonicalize(candidate)
    return any(cand == canonicalize(g) for g in ground_truths)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_norm(a: str, b: str) -> float:
    """Edit distance between canonical forms over the longer length; 0 means identical."""
    ca, cb = canonicalize(a), canonicalize(b)
    longest = max(len(ca), len(cb))
    if longest == 0:
        return 0.0
    return levenshtein(ca, cb) / longest
