"""Command line entry point: ``envtrace {run,eval,bench,diff-traces}``.

Exit codes: 0 success (including low scores), 1 usage, 2 parse error,
3 runtime error, 4 dataset/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .align import compare, render_diff
from .bench import (
    BenchSettings,
    DatasetError,
    TaskRecord,
    TraceCache,
    UsageError,
    _json_safe,
    aggregate,
    debug_baseline,
    evaluate,
    load_candidates,
    load_dataset,
    render_report,
    run_benchmark,
)
from .dsl import DslRuntimeError, DslSyntaxError, Limits, interpret, parse, program_digest
from .scoring import ScoringConfig, score_traces
from .simenv import (
    ConfigError,
    EnvConfig,
    Environment,
    SnapshotError,
    load_config,
    load_snapshot_file,
    validate_config,
)
from .trace import TraceFormatError, load_trace, serialize

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_RUNTIME, EXIT_DATA = 0, 1, 2, 3, 4
CACHE_ENV = "ENVTRACE_CACHE_DIR"


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(f"{self.prog}: error: {message}")


def _env_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", metavar="CONFIG", help="environment config JSON")
    p.add_argument("--snapshot", metavar="STATE", help="state snapshot JSON loaded before running")
    p.add_argument("--seed", type=int, default=0, help="jitter seed (default 0)")
    p.add_argument("--jitter", type=float, default=None, help="timing jitter bound, fraction in [0, 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="envtrace", description="Trace-based equivalence grading for .ictl control programs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="execute a program and write its trace")
    p.add_argument("program", help=".ictl source file")
    _env_options(p)
    p.add_argument("--trace", metavar="OUT", help="trace output path (default: stdout)")

    p = sub.add_parser("eval", help="grade a candidate against one or more ground truths")
    gts = p.add_mutually_exclusive_group(required=True)
    gts.add_argument("--gt", action="append", metavar="FILE", help="ground-truth program (repeatable)")
    gts.add_argument("--dataset", metavar="FILE", help="take ground truths from this dataset ...")
    p.add_argument("--task", metavar="ID", help="... for this task id")
    p.add_argument("--cand", required=True, metavar="FILE", help="candidate program")
    _env_options(p)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")

    p = sub.add_parser("bench", help="grade a candidate set over a dataset")
    p.add_argument("--dataset", required=True, metavar="FILE")
    cands = p.add_mutually_exclusive_group(required=True)
    cands.add_argument("--candidates", metavar="FILE", help="JSON map task_id -> list of sources")
    cands.add_argument("--debug-baseline", action="store_true", help="grade each task's first ground truth against itself")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--format", choices=["json", "csv", "md"], default="md")
    p.add_argument("--out", metavar="PATH", help="report path; figures are written beside it")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--model", default="candidate", help="row label in the leaderboard table")
    p.add_argument("--cache-dir", metavar="DIR", help=f"trace cache directory (overrides ${CACHE_ENV})")
    _env_options(p)

    p = sub.add_parser("diff-traces", help="side-by-side trace comparison with scores")
    p.add_argument("gt_trace")
    p.add_argument("pred_trace")
    p.add_argument("--env", metavar="CONFIG", help="environment config naming the temperature PVs")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", metavar="PATH")
    return parser


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(data: bytes | str, out: str | None) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _env_config(args) -> EnvConfig:
    cfg = load_config(args.env) if args.env else EnvConfig()
    if args.jitter is not None:
        if not 0 <= args.jitter < 1:
            raise UsageError("--jitter must be in [0, 1)")
        cfg = cfg.with_jitter(bound=args.jitter)
    cfg = cfg.with_jitter(seed=args.seed)
    validate_config(cfg)
    return cfg


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from None


def cmd_run(args) -> int:
    cfg = _env_config(args)
    source = _read(args.program)
    try:
        prog = parse(source)
    except DslSyntaxError as exc:
        _err(f"{args.program}:{exc.line}:{exc.col}: syntax error: {exc.msg}")
        return EXIT_PARSE
    env = Environment(cfg)
    if args.snapshot:
        env.load_snapshot(load_snapshot_file(args.snapshot))
    try:
        trace = interpret(prog, env, Limits(), program_digest(source))
        code = EXIT_OK
    except DslRuntimeError as exc:
        _err(f"{args.program}: runtime error: {exc}")
        trace = exc.trace
        code = EXIT_RUNTIME
    _emit(serialize(trace), args.trace)
    _err(f"{len(trace.events)} events, {len(trace.temperature_log)} temperature samples, {trace.meta.duration:.3f} s simulated")
    return code


def _box_summary(result, label: str) -> str:
    b = result.best
    lines = [
        f"#{label}",
        "#-----------------------------------------------------",
        f"#PV match rate: {100 * b.pv_match_rate:.2f}% ({b.n_value_matches}/{b.n_total_pairs})",
        f"#Timing match: {b.timing.passed} (score: {b.timing.composite:.3f})",
    ]
    if b.temp is not None:
        lines.append(f"#Temperature match: {b.temp.passed} (score: {b.temp.composite:.3f})")
    lines += [
        f"#EnvTrace Accuracy: {result.accuracy} (Full score: {result.best_full_score:.3f})",
        f"#Exact match: {result.exact_match}",
        f"#Normalized Levenshtein distance: {100 * result.levenshtein:.2f}%",
    ]
    if len(result.breakdowns) > 1:
        lines.append(f"#Best ground truth: #{result.best_index + 1} of {len(result.breakdowns)}")
    if result.candidate_error:
        lines.append(f"#Candidate error: {result.candidate_error}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    cfg = _env_config(args)
    snapshot = load_snapshot_file(args.snapshot) if args.snapshot else None
    if args.dataset:
        if not args.task:
            raise UsageError("--dataset requires --task")
        tasks = {t.task_id: t for t in load_dataset(args.dataset)}
        if args.task not in tasks:
            raise DatasetError(f"task {args.task!r} not found in {args.dataset}")
        task = tasks[args.task]
    else:
        if args.task:
            raise UsageError("--task is only valid with --dataset")
        task = TaskRecord("cli", "", tuple(_read(p) for p in args.gt))
        for path, src in zip(args.gt, task.ground_truths):
            try:
                parse(src)
            except DslSyntaxError as exc:
                _err(f"{path}:{exc.line}:{exc.col}: syntax error in ground truth: {exc.msg}")
                return EXIT_PARSE
    candidate = _read(args.cand)
    result = evaluate(task, candidate, cfg, ScoringConfig(), args.seed, snapshot=snapshot)
    if result.candidate_error:
        _err(f"{args.cand}: {result.candidate_error}")
    if args.format == "json":
        _emit(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit(_box_summary(result, f"{args.cand}"), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.parallel < 1:
        raise UsageError("--parallel must be >= 1")
    cfg = _env_config(args)
    snapshot = load_snapshot_file(args.snapshot) if args.snapshot else None
    tasks = load_dataset(args.dataset)
    candidates = debug_baseline(tasks) if args.debug_baseline else load_candidates(args.candidates)
    unknown = set(candidates) - {t.task_id for t in tasks}
    if unknown:
        _err(f"warning: candidates for unknown tasks ignored: {', '.join(sorted(unknown))}")
    cache_dir = args.cache_dir or os.environ.get(CACHE_ENV) or None
    if cache_dir:
        TraceCache(cache_dir)
    settings = BenchSettings(cfg, ScoringConfig(), args.seed, cache_dir, snapshot, Limits())
    results = run_benchmark(tasks, candidates, args.runs, settings, args.parallel)
    stats = aggregate(results)
    _emit(render_report(stats, results, args.format, args.model), args.out)
    if args.out and not args.no_figures:
        from .plots import write_report_figures

        for path in write_report_figures(results, args.out, args.model):
            _err(f"wrote {path}")
    return EXIT_OK


def cmd_diff(args) -> int:
    gt = load_trace(args.gt_trace)
    pred = load_trace(args.pred_trace)
    cfg = load_config(args.env) if args.env else EnvConfig()
    report = compare(gt.events, pred.events)
    b = score_traces(gt, pred, ScoringConfig(), cfg.temperature_pvs)
    if args.format == "json":
        doc = {
            "ground_truth_events": len(gt.events),
            "predicted_events": len(pred.events),
            "matches": report.n_value_matches,
            "total_pairs": report.n_total_pairs,
            "rows": [[r.gt_index, r.pred_index, r.match] for r in report.rows],
            "score": b.to_dict(),
        }
        _emit(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n", args.out)
        return EXIT_OK
    lines = [
        render_diff(gt.events, pred.events, report),
        "",
        f"Exact PV match: {b.exact_pv_match}",
        f"PV match rate: {100 * b.pv_match_rate:.2f}%",
        f"PV mismatch rate: {100 * (1 - b.pv_match_rate):.2f}%",
        f"Timing match: {b.timing.passed} (score: {b.timing.composite:.3f})",
    ]
    if b.temp is not None:
        lines.append(f"Temperature match: {b.temp.passed} (score: {b.temp.composite:.3f})")
    lines.append(f"Full match: {b.accuracy} (score: {b.full_score:.3f})")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "bench": cmd_bench, "diff-traces": cmd_diff}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        _err(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _err(f"envtrace: error: {exc}")
        return EXIT_USAGE
    except (ConfigError, SnapshotError, DatasetError, TraceFormatError) as exc:
        _err(f"envtrace: {type(exc).__name__}: {exc}")
        return EXIT_DATA
    except OSError as exc:
        _err(f"envtrace: {exc}")
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
