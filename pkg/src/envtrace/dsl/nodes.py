"""AST node types for .ictl programs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Num:
    value: float
    line: int = 0


@dataclass(frozen=True)
class Bool:
    value: bool
    line: int = 0


@dataclass(frozen=True)
class Name:
    id: str
    line: int = 0


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    line: int = 0


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    line: int = 0


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]
    line: int = 0


Expr = Union[Num, Bool, Name, Unary, Binary, Call]


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr
    line: int = 0


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    line: int = 0


@dataclass(frozen=True)
class For:
    var: str
    iterable: Expr
    body: tuple["Stmt", ...]
    line: int = 0


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple["Stmt", ...]
    line: int = 0


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] | None = None
    line: int = 0


Stmt = Union[Assign, ExprStmt, For, While, If]


@dataclass(frozen=True)
class Program:
    statements: tuple[Stmt, ...]
