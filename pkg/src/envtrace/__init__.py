"""Execution-trace equivalence grading for instrument-control programs."""

__version__ = "0.1.0"

from .align import compare, render_diff
from .bench import evaluate, load_dataset, run_benchmark
from .scoring import ScoringConfig, score_traces
from .simenv import EnvConfig, Environment
from .trace import ExecutionTrace, PVEvent, load_trace

__all__ = [
    "EnvConfig",
    "Environment",
    "ExecutionTrace",
    "PVEvent",
    "ScoringConfig",
    "__version__",
    "compare",
    "evaluate",
    "load_dataset",
    "load_trace",
    "render_diff",
    "run_benchmark",
    "score_traces",
]
