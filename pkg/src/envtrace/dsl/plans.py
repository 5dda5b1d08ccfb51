"""Built-in measurement plans, expanded into flat command lists."""

from __future__ import annotations

import math

from ..simenv import Acquire, Command, MoveAbs, MoveRel, SetExposure


class PlanError(Exception):
    pass


ALIGN_AXIS = "z"
ALIGN_EXPOSURE = 0.5
ALIGN_STEP = 0.1


def _count(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise PlanError(f"{name} must be a whole number, got {value!r}")
    if value != int(value):
        raise PlanError(f"{name} must be a whole number, got {value!r}")
    n = int(value)
    if n < 1:
        raise PlanError(f"{name} must be >= 1, got {n}")
    return n


def _num(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise PlanError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def linspace(start: float, stop: float, n: int) -> list[float]:
    if n == 1:
        return [start]
    step = (stop - start) / (n - 1)
    return [start + i * step for i in range(n - 1)] + [stop]


def measure(exposure) -> list[Command]:
    return [SetExposure(_num("exposure", exposure)), Acquire()]


def align(axis: str = ALIGN_AXIS) -> list[Command]:
    """Fixed alignment routine: rock the axis through -step, 0, +step with a
    shot at each point, come back to the start and take a final shot."""
    cmds: list[Command] = [SetExposure(ALIGN_EXPOSURE)]
    offset = 0.0
    for target in (-ALIGN_STEP, 0.0, ALIGN_STEP):
        cmds += [MoveRel(axis, target - offset), Acquire()]
        offset = target
    cmds += [MoveRel(axis, -offset), Acquire()]
    return cmds


def grid_scan(ax1, start1, stop1, n1, ax2, start2, stop2, n2, exposure) -> list[Command]:
    if not isinstance(ax1, str) or not isinstance(ax2, str):
        raise PlanError("grid_scan axes must be axis names")
    xs = linspace(_num("start1", start1), _num("stop1", stop1), _count("n1", n1))
    ys = linspace(_num("start2", start2), _num("stop2", stop2), _count("n2", n2))
    exposure = _num("exposure", exposure)
    cmds: list[Command] = []
    for x in xs:
        for y in ys:
            cmds += [MoveAbs(ax1, x), MoveAbs(ax2, y), SetExposure(exposure), Acquire()]
    return cmds


# name -> (function, arity)
PLANS = {
    "measure": (measure, 1),
    "align": (align, 0),
    "grid_scan": (grid_scan, 9),
    "outer_product_scan": (grid_scan, 9),
}


def expand_plan(name: str, args: list) -> list[Command]:
    try:
        fn, arity = PLANS[name]
    except KeyError:
        raise PlanError(f"unknown plan {name!r}") from None
    if len(args) != arity:
        raise PlanError(f"{name}() takes {arity} argument(s), got {len(args)}")
    return fn(*args)
