"""Benchmark harness: datasets, cached execution, multi-ground-truth grading,
aggregation over runs, and report rendering."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .dsl import DslRuntimeError, DslSyntaxError, Limits, canonicalize, interpret, parse, program_digest
from .scoring import (
    ScoreBreakdown,
    ScoringConfig,
    exact_match,
    levenshtein_norm,
    score_traces,
    temperature_involved,
    zero_breakdown,
)
from .simenv import EnvConfig, EnvError, Environment, StateSnapshot
from .trace import ExecutionTrace, TraceFilter, TraceFormatError, deserialize, filter_trace, serialize

MAX_GROUND_TRUTHS = 5
METRICS = ("full_score", "accuracy", "exact_match", "levenshtein")


class DatasetError(ValueError):
    pass


class UsageError(ValueError):
    pass


# -- datasets ---------------------------------------------------------------


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    prompt: str
    ground_truths: tuple[str, ...]
    has_temperature: bool | None = None
    tracked_pvs: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()


def _record_from_dict(obj, where: str) -> TaskRecord:
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: expected a JSON object")
    tid = obj.get("task_id")
    if not isinstance(tid, str) or not tid:
        raise DatasetError(f"{where}: field 'task_id' must be a non-empty string")
    where = f"task {tid!r}"
    prompt = obj.get("prompt", "")
    if not isinstance(prompt, str):
        raise DatasetError(f"{where}: field 'prompt' must be a string")
    gts = obj.get("ground_truths")
    if not isinstance(gts, list) or not gts:
        raise DatasetError(f"{where}: field 'ground_truths' must be a non-empty list")
    if len(gts) > MAX_GROUND_TRUTHS:
        raise DatasetError(f"{where}: field 'ground_truths' has more than {MAX_GROUND_TRUTHS} entries")
    for k, src in enumerate(gts):
        if not isinstance(src, str):
            raise DatasetError(f"{where}: field 'ground_truths[{k}]' must be a string")
        try:
            parse(src)
        except DslSyntaxError as exc:
            raise DatasetError(f"{where}: field 'ground_truths[{k}]' does not parse ({exc})") from None
    has_temp = obj.get("has_temperature")
    if has_temp is not None and not isinstance(has_temp, bool):
        raise DatasetError(f"{where}: field 'has_temperature' must be a boolean")
    tracked = obj.get("tracked_pvs") or []
    if not isinstance(tracked, list) or not all(isinstance(p, str) for p in tracked):
        raise DatasetError(f"{where}: field 'tracked_pvs' must be a list of strings")
    tags = obj.get("tags") or []
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise DatasetError(f"{where}: field 'tags' must be a list of strings")
    return TaskRecord(tid, prompt, tuple(gts), has_temp, tuple(tracked), tuple(tags))


def parse_dataset(lines: Iterable[str]) -> list[TaskRecord]:
    records: list[TaskRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        rec = _record_from_dict(obj, f"line {lineno}")
        if rec.task_id in seen:
            raise DatasetError(f"task {rec.task_id!r}: duplicate task_id")
        seen.add(rec.task_id)
        records.append(rec)
    return records


def load_dataset(path) -> list[TaskRecord]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_dataset(fh)
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None


def load_candidates(path) -> dict[str, list[dict]]:
    """Read a candidates file: task_id -> list of per-run entries.

    An entry is either a source string or ``{"source": ..., "codebleu": ...}``
    carrying an externally computed CodeBLEU value through to the reports.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read candidates {path}: {exc}") from None
    if not isinstance(data, dict):
        raise DatasetError("candidates file must map task_id to a list of sources")
    out: dict[str, list[dict]] = {}
    for tid, entries in data.items():
        if isinstance(entries, (str, dict)):
            entries = [entries]
        if not isinstance(entries, list) or not entries:
            raise DatasetError(f"task {tid!r}: candidates must be a non-empty list")
        norm = []
        for e in entries:
            if isinstance(e, str):
                e = {"source": e}
            if not isinstance(e, dict) or not isinstance(e.get("source"), str):
                raise DatasetError(f"task {tid!r}: each candidate needs a 'source' string")
            cb = e.get("codebleu")
            if cb is not None and (isinstance(cb, bool) or not isinstance(cb, (int, float))):
                raise DatasetError(f"task {tid!r}: 'codebleu' must be a number")
            norm.append({"source": e["source"], "codebleu": cb})
        out[tid] = norm
    return out


# -- cache ------------------------------------------------------------------


class TraceCache:
    """Content-addressed trace store. ``directory=None`` keeps entries in memory."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, bytes] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(source: str, env_cfg: EnvConfig, seed: int, extra: str = "") -> str:
        h = hashlib.sha256()
        for part in (canonicalize(source), env_cfg.digest(), str(seed), extra):
            h.update(part.encode("utf-8"))
            h.update(b"\0")
        return h.hexdigest()

    def _path(self, key: str) -> Path:
        assert self.directory is not None
        return self.directory / f"{key}.trace.jsonl"

    def get(self, key: str) -> ExecutionTrace | None:
        if self.directory is None:
            blob = self._mem.get(key)
            return None if blob is None else deserialize(blob)
        path = self._path(key)
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            return deserialize(blob)
        except (TraceFormatError, ValueError, UnicodeDecodeError):
            try:
                path.unlink()
            except FileNotFoundError:
                pass
            return None

    def put(self, key: str, trace: ExecutionTrace) -> None:
        blob = serialize(trace)
        if self.directory is None:
            self._mem[key] = blob
            return
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def cache_get(cache: TraceCache, key: str) -> ExecutionTrace | None:
    return cache.get(key)


def cache_put(cache: TraceCache, key: str, trace: ExecutionTrace) -> None:
    cache.put(key, trace)


# -- execution --------------------------------------------------------------


@dataclass(frozen=True)
class RunOutcome:
    trace: ExecutionTrace | None
    status: str  # ok, parse_error, runtime_error
    error: str | None = None


def execute(
    source: str,
    env_cfg: EnvConfig,
    seed: int = 0,
    *,
    snapshot: StateSnapshot | None = None,
    limits: Limits | None = None,
    cache: TraceCache | None = None,
) -> RunOutcome:
    """Run a program in a fresh environment, going through the cache when given."""
    try:
        prog = parse(source)
    except DslSyntaxError as exc:
        return RunOutcome(None, "parse_error", str(exc))
    except RecursionError:
        return RunOutcome(None, "parse_error", "program nesting too deep")
    cfg = env_cfg.with_jitter(seed=seed)
    limits = limits or Limits()
    extra = json.dumps([asdict(snapshot) if snapshot else None, asdict(limits)], sort_keys=True)
    key = TraceCache.key(source, cfg, seed, extra)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return RunOutcome(hit, "runtime_error" if hit.meta.error else "ok", hit.meta.error)
    env = Environment(cfg)
    if snapshot is not None:
        env.load_snapshot(snapshot)
    digest = program_digest(source)
    try:
        trace = interpret(prog, env, limits, digest)
        outcome = RunOutcome(trace, "ok")
    except DslRuntimeError as exc:
        outcome = RunOutcome(exc.trace, "runtime_error", str(exc))
    if cache is not None and outcome.trace is not None:
        cache.put(key, outcome.trace)
    return outcome


# -- grading ----------------------------------------------------------------


@dataclass
class TaskResult:
    task_id: str
    breakdowns: list[ScoreBreakdown]
    best_index: int
    best_full_score: float
    accuracy: bool
    exact_match: bool
    levenshtein: float
    candidate_error: str | None = None
    gt_errors: list[str | None] = field(default_factory=list)
    codebleu: float | None = None

    @property
    def best(self) -> ScoreBreakdown:
        return self.breakdowns[self.best_index]

    def to_dict(self) -> dict:
        return _json_safe(asdict(self))


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def evaluate(
    task: TaskRecord,
    candidate: str | bytes,
    env_cfg: EnvConfig | None = None,
    scoring_cfg: ScoringConfig | None = None,
    seed: int = 0,
    *,
    candidate_seed: int | None = None,
    cache: TraceCache | None = None,
    snapshot: StateSnapshot | None = None,
    limits: Limits | None = None,
) -> TaskResult:
    """Grade one candidate program against every ground truth of ``task``.

    Never raises for bad candidates: parse failures and crashes become scores.
    """
    env_cfg = env_cfg or EnvConfig()
    scoring_cfg = scoring_cfg or ScoringConfig()
    if isinstance(candidate, (bytes, bytearray)):
        candidate = candidate.decode("utf-8", errors="replace")
    cand_seed = seed if candidate_seed is None else candidate_seed
    flt = TraceFilter.of(task.tracked_pvs)
    temp_pvs = env_cfg.temperature_pvs

    ex = exact_match(candidate, task.ground_truths)
    lev = min(levenshtein_norm(candidate, g) for g in task.ground_truths)

    try:
        cand = execute(candidate, env_cfg, cand_seed, snapshot=snapshot, limits=limits, cache=cache)
    except (EnvError, ValueError, RecursionError) as exc:
        cand = RunOutcome(None, "runtime_error", f"{type(exc).__name__}: {exc}")

    breakdowns: list[ScoreBreakdown] = []
    gt_errors: list[str | None] = []
    for src in task.ground_truths:
        gt = execute(src, env_cfg, seed, snapshot=snapshot, limits=limits, cache=cache)
        gt_errors.append(gt.error)
        if gt.trace is None:
            breakdowns.append(zero_breakdown(bool(task.has_temperature)))
            continue
        gt_trace = filter_trace(gt.trace, flt)
        involved = task.has_temperature
        if cand.trace is None or (cand.status == "runtime_error" and not cand.trace.events):
            if involved is None:
                involved = temperature_involved(gt_trace, temp_pvs)
            breakdowns.append(zero_breakdown(involved))
            continue
        pred_trace = filter_trace(cand.trace, flt)
        breakdowns.append(score_traces(gt_trace, pred_trace, scoring_cfg, temp_pvs, involved))

    best = max(range(len(breakdowns)), key=lambda k: (breakdowns[k].full_score, -k))
    return TaskResult(
        task_id=task.task_id,
        breakdowns=breakdowns,
        best_index=best,
        best_full_score=breakdowns[best].full_score,
        accuracy=any(b.accuracy for b in breakdowns),
        exact_match=ex,
        levenshtein=lev,
        candidate_error=cand.error,
        gt_errors=gt_errors,
    )


# -- benchmark runs ---------------------------------------------------------


@dataclass(frozen=True)
class BenchSettings:
    env_cfg: EnvConfig = field(default_factory=EnvConfig)
    scoring_cfg: ScoringConfig = field(default_factory=ScoringConfig)
    seed: int = 0
    cache_dir: str | None = None
    snapshot: StateSnapshot | None = None
    limits: Limits = field(default_factory=Limits)


def candidate_seed_for_run(seed: int, run: int, jitter: float) -> int:
    """Ground truths always run with ``seed``. With jitter enabled, each
    candidate run draws its own seed so repeated runs see fresh timing noise."""
    return seed if jitter == 0 else seed + 1 + run


def _job(args):
    task, entry, run, settings = args
    cache = TraceCache(settings.cache_dir) if settings.cache_dir else None
    result = evaluate(
        task,
        entry["source"],
        settings.env_cfg,
        settings.scoring_cfg,
        settings.seed,
        candidate_seed=candidate_seed_for_run(settings.seed, run, settings.env_cfg.jitter.bound),
        cache=cache,
        snapshot=settings.snapshot,
        limits=settings.limits,
    )
    result.codebleu = entry.get("codebleu")
    return run, result


def run_benchmark(
    tasks: Sequence[TaskRecord],
    candidates: dict[str, list],
    runs: int = 3,
    settings: BenchSettings | None = None,
    parallel: int = 1,
) -> list[tuple[int, TaskResult]]:
    """Grade ``runs`` candidate runs per task. Run r uses entry r of each
    task's candidate list (cycling when fewer are given). Tasks without a
    candidate are graded against an empty program."""
    if runs < 1:
        raise UsageError("runs must be >= 1")
    settings = settings or BenchSettings()
    jobs = []
    for run in range(runs):
        for task in tasks:
            entries = candidates.get(task.task_id) or [{"source": ""}]
            entry = entries[run % len(entries)]
            if isinstance(entry, str):
                entry = {"source": entry}
            jobs.append((task, entry, run, settings))
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        results = [_job(j) for j in jobs]
    return sorted(results, key=lambda rr: (rr[0], rr[1].task_id))


def debug_baseline(tasks: Sequence[TaskRecord]) -> dict[str, list[dict]]:
    """Candidates that are each task's first ground truth, for self-comparison."""
    return {t.task_id: [{"source": t.ground_truths[0]}] for t in tasks}


# -- aggregation ------------------------------------------------------------


@dataclass(frozen=True)
class MetricStat:
    mean: float
    std: float


@dataclass(frozen=True)
class SummaryStats:
    metrics: dict[str, MetricStat]
    per_run: dict[int, dict[str, float]]
    n_tasks: int
    n_runs: int


def _metric(result: TaskResult, name: str) -> float:
    if name == "full_score":
        return result.best_full_score
    if name == "accuracy":
        return float(result.accuracy)
    if name == "exact_match":
        return float(result.exact_match)
    if name == "levenshtein":
        return result.levenshtein
    if name == "codebleu":
        return float(result.codebleu)
    raise KeyError(name)


def aggregate(results: Sequence[tuple[int, TaskResult]]) -> SummaryStats:
    """Mean over tasks within each run, then mean and population std across runs."""
    if not results:
        raise UsageError("cannot aggregate an empty result list")
    by_run: dict[int, list[TaskResult]] = {}
    for run, res in sorted(results, key=lambda rr: (rr[0], rr[1].task_id)):
        by_run.setdefault(run, []).append(res)
    names = list(METRICS)
    if all(r.codebleu is not None for _, r in results):
        names.append("codebleu")
    per_run = {run: {m: statistics.fmean(_metric(r, m) for r in rs) for m in names} for run, rs in by_run.items()}
    metrics = {}
    for m in names:
        vals = [per_run[run][m] for run in sorted(per_run)]
        metrics[m] = MetricStat(statistics.fmean(vals), statistics.pstdev(vals))
    n_tasks = len({r.task_id for _, r in results})
    return SummaryStats(metrics, per_run, n_tasks, len(by_run))


# -- reports ----------------------------------------------------------------

CSV_FIELDS = [
    "run",
    "task_id",
    "full_score",
    "accuracy",
    "exact_match",
    "levenshtein",
    "pv_match_rate",
    "timing_score",
    "temp_score",
    "codebleu",
    "error",
]


def task_row(run: int, r: TaskResult) -> dict:
    b = r.best
    return {
        "run": run,
        "task_id": r.task_id,
        "full_score": r.best_full_score,
        "accuracy": r.accuracy,
        "exact_match": r.exact_match,
        "levenshtein": r.levenshtein,
        "pv_match_rate": b.pv_match_rate,
        "timing_score": b.timing.composite,
        "temp_score": b.temp.composite if b.temp is not None else None,
        "codebleu": r.codebleu,
        "error": r.candidate_error,
    }


def report_dict(stats: SummaryStats, results: Sequence[tuple[int, TaskResult]], model: str = "candidate") -> dict:
    return _json_safe(
        {
            "model": model,
            "n_tasks": stats.n_tasks,
            "n_runs": stats.n_runs,
            "summary": {m: {"mean": s.mean, "std": s.std} for m, s in stats.metrics.items()},
            "per_run": {str(k): v for k, v in sorted(stats.per_run.items())},
            "results": [dict(task_row(run, r), breakdowns=r.to_dict()["breakdowns"]) for run, r in results],
        }
    )


MD_COLUMNS = [
    ("full_score", "EnvTrace Full Score (%, ↑)"),
    ("accuracy", "EnvTrace Accuracy (%, ↑)"),
    ("exact_match", "Exact Match (%, ↑)"),
    ("levenshtein", "Norm. Lev. Dist. (%, ↓)"),
    ("codebleu", "CodeBLEU (%, ↑)"),
]


def render_leaderboard(rows: Sequence[tuple[str, SummaryStats]]) -> str:
    cols = [(k, h) for k, h in MD_COLUMNS if any(k in s.metrics for _, s in rows)]
    lines = [
        "| Model | " + " | ".join(h for _, h in cols) + " |",
        "|---|" + "---:|" * len(cols),
    ]
    for model, s in rows:
        cells = []
        for k, _ in cols:
            m = s.metrics.get(k)
            cells.append("n/a" if m is None else f"{100 * m.mean:.1f} ± {100 * m.std:.1f}")
        lines.append(f"| {model} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_report(
    stats: SummaryStats,
    results: Sequence[tuple[int, TaskResult]],
    fmt: str = "md",
    model: str = "candidate",
) -> bytes:
    if fmt == "json":
        return (json.dumps(report_dict(stats, results, model), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for run, r in results:
            row = task_row(run, r)
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
        return buf.getvalue().encode()
    if fmt == "md":
        return render_leaderboard([(model, stats)]).encode()
    raise UsageError(f"unknown report format {fmt!r} (expected json, csv or md)")
