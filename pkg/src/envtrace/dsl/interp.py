"""Tree-walking interpreter that lowers .ictl programs onto the twin."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from ..simenv import (
    Acquire,
    Command,
    EnvError,
    Environment,
    MoveAbs,
    MoveRel,
    SetExposure,
    SetPower,
    SetTemperature,
    Sleep,
    WaitTemperature,
)
from ..trace import ExecutionTrace
from .canonical import canonicalize
from .nodes import Assign, Binary, Bool, Call, ExprStmt, For, If, Name, Num, Program, Unary, While
from .plans import PlanError, expand_plan

DEFAULT_WAIT_TIMEOUT = 3600.0
RANGE_SLACK = 1e-12


@dataclass(frozen=True)
class Limits:
    max_steps: int = 100_000
    max_sim_seconds: float = 86_400.0

    def __post_init__(self):
        if self.max_steps <= 0 or self.max_sim_seconds <= 0:
            raise ValueError("limits must be positive")


class DslRuntimeError(Exception):
    """A program failed while running. ``trace`` holds what it did before failing."""

    def __init__(self, message: str, line: int = 0, trace: ExecutionTrace | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.msg = message
        self.line = line
        self.trace = trace


class LimitExceeded(DslRuntimeError):
    pass


class _Fail(Exception):
    """Internal: carries a message up to the statement that knows its line."""


@dataclass(frozen=True)
class RangeValue:
    start: float
    stop: float
    step: float

    def __len__(self) -> int:
        return range_length(self.start, self.stop, self.step)

    def __iter__(self):
        for i in range(len(self)):
            yield self.start + i * self.step


def range_length(start: float, stop: float, step: float) -> int:
    """Half-open arange count with a small slack so ``stop = end + step/2`` idioms land exactly."""
    if step == 0:
        raise _Fail("range() step must not be zero")
    return max(0, math.ceil((stop - start) / step - RANGE_SLACK))


def program_digest(source: str) -> str:
    return hashlib.sha256(canonicalize(source).encode("utf-8")).hexdigest()


# builtins that lower to twin commands: name -> (min args, max args, axis arg positions)
COMMANDS = {
    "move_abs": (2, 2, (0,)),
    "move_rel": (2, 2, (0,)),
    "set_exposure": (1, 1, ()),
    "acquire": (0, 0, ()),
    "measure": (1, 1, ()),
    "set_temp": (1, 1, ()),
    "wait_temp": (1, 2, ()),
    "power_on": (0, 0, ()),
    "power_off": (0, 0, ()),
    "sleep": (1, 1, ()),
    "align": (0, 0, ()),
    "grid_scan": (9, 9, (0, 4)),
    "outer_product_scan": (9, 9, (0, 4)),
}

# pure helpers usable inside expressions
FUNCTIONS = {
    "range": (1, 3),
    "abs": (1, 1),
    "min": (2, 2),
    "max": (2, 2),
    "round": (1, 1),
    "int": (1, 1),
}


def _is_num(v) -> bool:
    return isinstance(v, float) and not isinstance(v, bool)


def _need_num(v, what: str) -> float:
    if not _is_num(v):
        raise _Fail(f"{what} must be a number, got {_type_name(v)}")
    return v


def _type_name(v) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, RangeValue):
        return "range"
    if v is None:
        return "nothing"
    return "number"


def _truthy(v) -> bool:
    if isinstance(v, bool):
        return v
    if _is_num(v):
        return v != 0.0
    raise _Fail(f"cannot use {_type_name(v)} as a condition")


def _finite(v: float) -> float:
    if not math.isfinite(v):
        raise _Fail("arithmetic produced a non-finite number")
    return v


class Interpreter:
    def __init__(self, env: Environment, limits: Limits | None = None):
        self.env = env
        self.limits = limits or Limits()
        self.vars: dict[str, object] = {}
        self.steps = 0
        self.commands: list[Command] = []

    # statements

    def run(self, prog: Program) -> None:
        self._block(prog.statements)

    def _block(self, stmts) -> None:
        for stmt in stmts:
            self._stmt(stmt)

    def _tick(self, line: int) -> None:
        if self.steps >= self.limits.max_steps:
            raise LimitExceeded(f"step limit of {self.limits.max_steps} exceeded", line)
        self.steps += 1

    def _stmt(self, stmt) -> None:
        self._tick(stmt.line)
        try:
            if isinstance(stmt, Assign):
                value = self._eval(stmt.expr)
                if value is None:
                    raise _Fail("assigned expression produces no value")
                self.vars[stmt.name] = value
            elif isinstance(stmt, ExprStmt):
                self._eval(stmt.expr, statement=True)
            elif isinstance(stmt, If):
                if _truthy(self._eval(stmt.cond)):
                    self._block(stmt.then)
                elif stmt.orelse is not None:
                    self._block(stmt.orelse)
            elif isinstance(stmt, While):
                while _truthy(self._eval(stmt.cond)):
                    self._block(stmt.body)
                    self._tick(stmt.line)
            elif isinstance(stmt, For):
                seq = self._eval(stmt.iterable)
                if not isinstance(seq, RangeValue):
                    raise _Fail(f"for loop needs a range, got {_type_name(seq)}")
                for value in seq:
                    self.vars[stmt.var] = value
                    self._block(stmt.body)
            else:  # pragma: no cover - parser never builds anything else
                raise _Fail(f"unknown statement {stmt!r}")
        except _Fail as exc:
            raise DslRuntimeError(str(exc), stmt.line) from None
        except (EnvError, PlanError) as exc:
            raise DslRuntimeError(str(exc), stmt.line) from None

    # expressions

    def _eval(self, node, statement: bool = False):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Bool):
            return node.value
        if isinstance(node, Name):
            try:
                return self.vars[node.id]
            except KeyError:
                raise _Fail(f"name {node.id!r} is not defined") from None
        if isinstance(node, Unary):
            v = self._eval(node.operand)
            if node.op == "not":
                return not _truthy(v)
            v = _need_num(v, f"operand of unary {node.op}")
            return -v if node.op == "-" else v
        if isinstance(node, Binary):
            return self._binary(node)
        if isinstance(node, Call):
            return self._call(node, statement)
        raise _Fail(f"cannot evaluate {node!r}")

    def _binary(self, node: Binary):
        op = node.op
        if op == "and":
            return _truthy(self._eval(node.left)) and _truthy(self._eval(node.right))
        if op == "or":
            return _truthy(self._eval(node.left)) or _truthy(self._eval(node.right))
        left = self._eval(node.left)
        right = self._eval(node.right)
        if op in ("==", "!="):
            if _type_name(left) != _type_name(right) or isinstance(left, RangeValue):
                raise _Fail(f"cannot compare {_type_name(left)} with {_type_name(right)}")
            return (left == right) == (op == "==")
        a = _need_num(left, f"left operand of {op}")
        b = _need_num(right, f"right operand of {op}")
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "+":
            return _finite(a + b)
        if op == "-":
            return _finite(a - b)
        if op == "*":
            return _finite(a * b)
        if op in ("/", "%"):
            if b == 0:
                raise _Fail("division by zero")
            return _finite(a / b if op == "/" else a % b)
        raise _Fail(f"unknown operator {op}")

    def _call(self, node: Call, statement: bool):
        name = node.name
        if name in FUNCTIONS:
            lo, hi = FUNCTIONS[name]
            self._check_arity(name, len(node.args), lo, hi)
            args = [self._eval(a) for a in node.args]
            return self._function(name, args)
        if name not in COMMANDS:
            raise _Fail(f"unknown function {name!r}")
        lo, hi, axis_pos = COMMANDS[name]
        self._check_arity(name, len(node.args), lo, hi)
        args = []
        for i, arg in enumerate(node.args):
            if i in axis_pos:
                args.append(self._axis(name, arg))
            else:
                args.append(_need_num(self._eval(arg), f"argument {i + 1} of {name}()"))
        if not statement:
            raise _Fail(f"{name}() does not produce a value")
        for cmd in self._lower(name, args):
            self._issue(cmd)
        return None

    def _check_arity(self, name: str, n: int, lo: int, hi: int) -> None:
        if not lo <= n <= hi:
            want = str(lo) if lo == hi else f"{lo} to {hi}"
            raise _Fail(f"{name}() takes {want} argument(s), got {n}")

    def _axis(self, fname: str, arg) -> str:
        if not isinstance(arg, Name):
            raise _Fail(f"{fname}() expects an axis name")
        if arg.id not in self.env.config.axis_names:
            raise _Fail(f"unknown axis {arg.id!r}")
        return arg.id

    def _function(self, name: str, args: list):
        if name == "range":
            nums = [_need_num(a, "range() argument") for a in args]
            if len(nums) == 1:
                nums = [0.0, nums[0]]
            start, stop = nums[0], nums[1]
            step = nums[2] if len(nums) == 3 else 1.0
            seq = RangeValue(start, stop, step)
            if len(seq) > self.limits.max_steps:
                raise LimitExceeded(f"range of {len(seq)} values exceeds the step limit")
            return seq
        nums = [_need_num(a, f"{name}() argument") for a in args]
        if name == "abs":
            return abs(nums[0])
        if name == "min":
            return min(nums)
        if name == "max":
            return max(nums)
        if name == "round":
            return float(round(nums[0]))
        if name == "int":
            return float(int(nums[0]))
        raise _Fail(f"unknown function {name!r}")

    def _lower(self, name: str, args: list) -> list[Command]:
        if name == "move_abs":
            return [MoveAbs(args[0], args[1])]
        if name == "move_rel":
            return [MoveRel(args[0], args[1])]
        if name == "set_exposure":
            return [SetExposure(args[0])]
        if name == "acquire":
            return [Acquire()]
        if name == "set_temp":
            return [SetTemperature(args[0])]
        if name == "wait_temp":
            return [WaitTemperature(args[0], args[1] if len(args) > 1 else DEFAULT_WAIT_TIMEOUT)]
        if name == "power_on":
            return [SetPower(True)]
        if name == "power_off":
            return [SetPower(False)]
        if name == "sleep":
            return [Sleep(args[0])]
        return expand_plan(name, args)

    def _issue(self, cmd: Command) -> None:
        self.commands.append(cmd)
        self.env.apply(cmd)
        if self.env.clock > self.limits.max_sim_seconds:
            raise LimitExceeded(f"simulated time limit of {self.limits.max_sim_seconds} s exceeded")


def interpret(prog: Program, env: Environment, limits: Limits | None = None, digest: str = "") -> ExecutionTrace:
    """Run ``prog`` against ``env`` and return the resulting trace.

    On failure a :class:`DslRuntimeError` is raised with the partial trace
    attached, so a crashed program can still be graded on what it did.
    """
    it = Interpreter(env, limits)
    try:
        it.run(prog)
    except DslRuntimeError as exc:
        exc.trace = env.take_trace(digest, error=str(exc))
        raise
    except RecursionError:
        err = DslRuntimeError("program nesting too deep")
        err.trace = env.take_trace(digest, error=str(err))
        raise err from None
    return env.take_trace(digest)
