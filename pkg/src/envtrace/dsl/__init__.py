"""The .ictl instrument-control language: parser, interpreter and plans."""

from .canonical import canonicalize
from .interp import DslRuntimeError, Interpreter, LimitExceeded, Limits, interpret, program_digest, range_length
from .nodes import Program
from .parser import DslSyntaxError, parse, tokenize
from .plans import PlanError, expand_plan

__all__ = [
    "DslRuntimeError",
    "DslSyntaxError",
    "Interpreter",
    "LimitExceeded",
    "Limits",
    "PlanError",
    "Program",
    "canonicalize",
    "expand_plan",
    "interpret",
    "parse",
    "program_digest",
    "range_length",
    "tokenize",
]
