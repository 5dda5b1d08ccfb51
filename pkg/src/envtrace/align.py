"""Trace alignment and the match counts behind the PV match rate.

Alignment is recursive longest-matching-block (gestalt) matching over PV
names. Value agreement is then checked pair by pair on the aligned
positions, so an event on the right PV with the wrong value is a mismatch
that still occupies its slot instead of shifting the rest of the alignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .trace import PVEvent

VALUE_TOL = 1e-3
KEY_DECIMALS = 3


@dataclass(frozen=True)
class Opcode:
    tag: str  # equal, replace, delete, insert
    i1: int
    i2: int
    j1: int
    j2: int

    @property
    def gt_len(self) -> int:
        return self.i2 - self.i1

    @property
    def pred_len(self) -> int:
        return self.j2 - self.j1


@dataclass(frozen=True)
class Alignment:
    opcodes: tuple[Opcode, ...]
    n_gt: int
    n_pred: int


@dataclass(frozen=True)
class PairVerdict:
    gt_index: int | None
    pred_index: int | None
    match: bool


@dataclass(frozen=True)
class MatchReport:
    n_value_matches: int
    n_total_pairs: int
    matched_pairs: tuple[tuple[int, int], ...]
    rows: tuple[PairVerdict, ...]

    @property
    def rate(self) -> float:
        if self.n_total_pairs == 0:
            return 1.0
        return self.n_value_matches / self.n_total_pairs


@dataclass(frozen=True)
class EventKey:
    pv_name: str
    qvalue: float


def event_key(ev: PVEvent) -> EventKey:
    # round() on floats is round-half-even on the binary value
    return EventKey(ev.pv, round(ev.value, KEY_DECIMALS) + 0.0)


def longest_match(a: Sequence, b: Sequence, alo: int, ahi: int, blo: int, bhi: int) -> tuple[int, int, int]:
    """Longest block a[i:i+k] == b[j:j+k] inside the given window.

    Ties go to the smallest i, then the smallest j.
    """
    positions: dict[Hashable, list[int]] = {}
    for j in range(blo, bhi):
        positions.setdefault(b[j], []).append(j)
    best_i, best_j, best_k = alo, blo, 0
    run: dict[int, int] = {}
    for i in range(alo, ahi):
        new_run: dict[int, int] = {}
        for j in positions.get(a[i], ()):
            k = run.get(j - 1, 0) + 1
            new_run[j] = k
            if k > best_k:
                best_i, best_j, best_k = i - k + 1, j - k + 1, k
        run = new_run
    return best_i, best_j, best_k


def matching_blocks(a: Sequence, b: Sequence) -> list[tuple[int, int, int]]:
    blocks = []
    stack = [(0, len(a), 0, len(b))]
    while stack:
        alo, ahi, blo, bhi = stack.pop()
        i, j, k = longest_match(a, b, alo, ahi, blo, bhi)
        if k:
            blocks.append((i, j, k))
            if alo < i and blo < j:
                stack.append((alo, i, blo, j))
            if i + k < ahi and j + k < bhi:
                stack.append((i + k, ahi, j + k, bhi))
    blocks.sort()
    merged: list[tuple[int, int, int]] = []
    for i, j, k in blocks:
        if merged and merged[-1][0] + merged[-1][2] == i and merged[-1][1] + merged[-1][2] == j:
            pi, pj, pk = merged[-1]
            merged[-1] = (pi, pj, pk + k)
        else:
            merged.append((i, j, k))
    return merged


def _gap_opcodes(i1: int, i2: int, j1: int, j2: int) -> list[Opcode]:
    n = min(i2 - i1, j2 - j1)
    ops = []
    if n:
        ops.append(Opcode("replace", i1, i1 + n, j1, j1 + n))
    if i2 - i1 > n:
        ops.append(Opcode("delete", i1 + n, i2, j1 + n, j1 + n))
    if j2 - j1 > n:
        ops.append(Opcode("insert", i1 + n, i1 + n, j1 + n, j2))
    return ops


def align(gt: Sequence[Hashable], pred: Sequence[Hashable]) -> Alignment:
    """Align two key sequences into equal/replace/delete/insert opcodes.

    Replace opcodes always cover equal-length ranges; the excess of an
    unequal gap becomes a trailing delete or insert.
    """
    ops: list[Opcode] = []
    i = j = 0
    for bi, bj, k in matching_blocks(gt, pred) + [(len(gt), len(pred), 0)]:
        ops += _gap_opcodes(i, bi, j, bj)
        if k:
            ops.append(Opcode("equal", bi, bi + k, bj, bj + k))
        i, j = bi + k, bj + k
    return Alignment(tuple(ops), len(gt), len(pred))


def align_events(gt: Sequence[PVEvent], pred: Sequence[PVEvent], key: str = "name") -> Alignment:
    """Align event sequences on PV name (default) or on name plus rounded value."""
    if key == "name":
        return align([e.pv for e in gt], [e.pv for e in pred])
    if key == "value":
        return align([event_key(e) for e in gt], [event_key(e) for e in pred])
    raise ValueError(f"unknown alignment key {key!r}")


def values_match(a: PVEvent, b: PVEvent, tol: float = VALUE_TOL) -> bool:
    return a.pv == b.pv and abs(a.value - b.value) <= tol


def match_report(al: Alignment, gt: Sequence[PVEvent], pred: Sequence[PVEvent], tol: float = VALUE_TOL) -> MatchReport:
    if al.n_gt != len(gt) or al.n_pred != len(pred):
        raise ValueError(
            f"alignment is for {al.n_gt} vs {al.n_pred} events, got {len(gt)} vs {len(pred)}"
        )
    rows: list[PairVerdict] = []
    matched: list[tuple[int, int]] = []
    total = 0
    for op in al.opcodes:
        total += max(op.gt_len, op.pred_len)
        if op.tag in ("equal", "replace"):
            for k in range(op.gt_len):
                gi, pj = op.i1 + k, op.j1 + k
                ok = values_match(gt[gi], pred[pj], tol)
                rows.append(PairVerdict(gi, pj, ok))
                if ok:
                    matched.append((gi, pj))
        elif op.tag == "delete":
            rows += [PairVerdict(gi, None, False) for gi in range(op.i1, op.i2)]
        else:
            rows += [PairVerdict(None, pj, False) for pj in range(op.j1, op.j2)]
    return MatchReport(len(matched), total, tuple(matched), tuple(rows))


def compare(gt: Sequence[PVEvent], pred: Sequence[PVEvent], tol: float = VALUE_TOL) -> MatchReport:
    return match_report(align_events(gt, pred), gt, pred, tol)


def exact_pv_match(gt: Sequence[PVEvent], pred: Sequence[PVEvent], tol: float = VALUE_TOL) -> bool:
    if len(gt) != len(pred):
        return False
    al = align_events(gt, pred)
    if any(op.tag != "equal" for op in al.opcodes):
        return False
    return all(values_match(g, p, tol) for g, p in zip(gt, pred))


def matched_timestamps(report: MatchReport, gt: Sequence[PVEvent], pred: Sequence[PVEvent]) -> list[tuple[float, float]]:
    return [(gt[i].t, pred[j].t) for i, j in report.matched_pairs]


# -- rendering --------------------------------------------------------------


def _fmt_value(v: float) -> str:
    return repr(float(v)) if v != int(v) else (str(int(v)) if abs(v) < 1e15 else repr(v))


def render_diff(gt: Sequence[PVEvent], pred: Sequence[PVEvent], report: MatchReport | None = None) -> str:
    """Side-by-side comparison in the style of a log diff, one aligned pair per row."""
    report = report or compare(gt, pred)
    name_w = max([len(e.pv) for e in list(gt) + list(pred)] + [8])
    val_w = max([len(_fmt_value(e.value)) for e in list(gt) + list(pred)] + [5])

    def cell(ev: PVEvent | None) -> str:
        if ev is None:
            return " " * (name_w + val_w + 22)
        return f"| {ev.pv:<{name_w}} | {ev.t:>12.3f} | {_fmt_value(ev.value):<{val_w}} |"

    width = len(cell(None))
    bar = "-" * (2 * width + 5)
    lines = [bar, f"{'GROUND TRUTH':^{width}} | {'PREDICTED':^{width}}", bar]
    for row in report.rows:
        g = gt[row.gt_index] if row.gt_index is not None else None
        p = pred[row.pred_index] if row.pred_index is not None else None
        mark = "✓" if row.match else "✗"
        lines.append(f"{cell(g)} | {cell(p)} {mark}")
    lines.append(bar)
    lines += [
        "",
        "SUMMARY:",
        f"  Ground Truth: {len(gt)} log entries",
        f"  Predicted:    {len(pred)} log entries",
        f"  Matches:      {report.n_value_matches}",
        f"  Mismatches:   {report.n_total_pairs - report.n_value_matches}",
        f"  Difference:   {abs(len(gt) - len(pred))} entries",
    ]
    return "\n".join(lines)
