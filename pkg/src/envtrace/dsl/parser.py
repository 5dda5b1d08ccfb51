"""Tokenizer and recursive-descent parser for the .ictl control language.

See docs/grammar.md for the EBNF. Statements end at a newline or ``;``;
blocks are brace-delimited so indentation carries no meaning. Newlines inside
parentheses are ignored, which lets long calls wrap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .nodes import Assign, Binary, Bool, Call, ExprStmt, For, If, Name, Num, Program, Unary, While

KEYWORDS = {"for", "in", "while", "if", "else", "and", "or", "not", "true", "false"}


class DslSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.msg = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, NAME, KW, OP, NL, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>==|!=|<=|>=|[-+*/%<>=(){},;])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    depth = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise DslSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            if depth == 0:
                tokens.append(Token("NL", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(Token("NUM", text, line, col))
        elif kind == "name":
            tokens.append(Token("KW" if text in KEYWORDS else "NAME", text, line, col))
        elif kind == "op":
            if text == "(":
                depth += 1
            elif text == ")":
                depth = max(0, depth - 1)
            # ';' behaves as a newline
            tokens.append(Token("NL", ";", line, col) if text == ";" else Token("OP", text, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


def _describe(tok: Token) -> str:
    if tok.kind == "EOF":
        return "end of input"
    if tok.kind == "NL":
        return "end of line" if tok.text == "\n" else "';'"
    return repr(tok.text)


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def _next(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def _check(self, kind: str, text: str | None = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def _accept(self, kind: str, text: str | None = None) -> Token | None:
        if self._check(kind, text):
            return self._next()
        return None

    def _expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        if self._check(kind, text):
            return self._next()
        expected = what or (repr(text) if text else kind.lower())
        raise DslSyntaxError(f"expected {expected}, found {_describe(self.tok)}", self.tok.line, self.tok.col)

    def _skip_newlines(self) -> None:
        while self._accept("NL"):
            pass

    # statements

    def program(self) -> Program:
        stmts = self._statements(closing=None)
        self._expect("EOF", what="end of input")
        return Program(tuple(stmts))

    def _statements(self, closing: str | None) -> list:
        stmts = []
        self._skip_newlines()
        while not self._check("EOF") and not (closing and self._check("OP", closing)):
            stmts.append(self.statement())
            if self._check("NL"):
                self._skip_newlines()
            elif self._check("EOF") or (closing and self._check("OP", closing)):
                pass
            else:
                raise DslSyntaxError(
                    f"expected end of statement, found {_describe(self.tok)}", self.tok.line, self.tok.col
                )
        return stmts

    def _block(self) -> tuple:
        self._expect("OP", "{")
        body = self._statements(closing="}")
        self._expect("OP", "}", what="'}'")
        return tuple(body)

    def statement(self):
        tok = self.tok
        if self._accept("KW", "for"):
            var = self._expect("NAME", what="loop variable").text
            self._expect("KW", "in", what="'in'")
            iterable = self.expr()
            return For(var, iterable, self._block(), tok.line)
        if self._accept("KW", "while"):
            cond = self.expr()
            return While(cond, self._block(), tok.line)
        if self._accept("KW", "if"):
            return self._if_tail(tok)
        if tok.kind == "NAME" and self.toks[self.i + 1].kind == "OP" and self.toks[self.i + 1].text == "=":
            self.i += 2
            return Assign(tok.text, self.expr(), tok.line)
        if tok.kind in ("NL", "EOF") or (tok.kind == "OP" and tok.text in "}),"):
            raise DslSyntaxError(f"expected a statement, found {_describe(tok)}", tok.line, tok.col)
        return ExprStmt(self.expr(), tok.line)

    def _if_tail(self, tok: Token) -> If:
        cond = self.expr()
        then = self._block()
        orelse = None
        save = self.i
        self._skip_newlines()
        if self._accept("KW", "else"):
            else_tok = self.toks[self.i - 1]
            if self._accept("KW", "if"):
                orelse = (self._if_tail(else_tok),)
            else:
                orelse = self._block()
        else:
            self.i = save
        return If(cond, then, orelse, tok.line)

    # expressions, lowest precedence first

    def expr(self):
        return self._or()

    def _or(self):
        left = self._and()
        while (tok := self._accept("KW", "or")) is not None:
            left = Binary("or", left, self._and(), tok.line)
        return left

    def _and(self):
        left = self._not()
        while (tok := self._accept("KW", "and")) is not None:
            left = Binary("and", left, self._not(), tok.line)
        return left

    def _not(self):
        if (tok := self._accept("KW", "not")) is not None:
            return Unary("not", self._not(), tok.line)
        return self._comparison()

    def _comparison(self):
        left = self._additive()
        if self.tok.kind == "OP" and self.tok.text in ("==", "!=", "<", "<=", ">", ">="):
            tok = self._next()
            left = Binary(tok.text, left, self._additive(), tok.line)
            if self.tok.kind == "OP" and self.tok.text in ("==", "!=", "<", "<=", ">", ">="):
                raise DslSyntaxError("chained comparisons are not supported", self.tok.line, self.tok.col)
        return left

    def _additive(self):
        left = self._term()
        while self.tok.kind == "OP" and self.tok.text in "+-":
            tok = self._next()
            left = Binary(tok.text, left, self._term(), tok.line)
        return left

    def _term(self):
        left = self._unary()
        while self.tok.kind == "OP" and self.tok.text in ("*", "/", "%"):
            tok = self._next()
            left = Binary(tok.text, left, self._unary(), tok.line)
        return left

    def _unary(self):
        if self.tok.kind == "OP" and self.tok.text in "+-":
            tok = self._next()
            return Unary(tok.text, self._unary(), tok.line)
        return self._primary()

    def _primary(self):
        tok = self.tok
        if tok.kind == "NUM":
            self._next()
            value = float(tok.text)
            if value == float("inf"):
                raise DslSyntaxError(f"number literal {tok.text} is out of range", tok.line, tok.col)
            return Num(value, tok.line)
        if tok.kind == "KW" and tok.text in ("true", "false"):
            self._next()
            return Bool(tok.text == "true", tok.line)
        if tok.kind == "NAME":
            self._next()
            if self._accept("OP", "("):
                return Call(tok.text, self._arguments(), tok.line)
            return Name(tok.text, tok.line)
        if self._accept("OP", "("):
            inner = self.expr()
            self._expect("OP", ")", what="')'")
            return inner
        raise DslSyntaxError(f"expected an expression, found {_describe(tok)}", tok.line, tok.col)

    def _arguments(self) -> tuple:
        args = []
        if self._accept("OP", ")"):
            return ()
        while True:
            args.append(self.expr())
            if self._accept("OP", ")"):
                return tuple(args)
            comma = self._expect("OP", ",", what="',' or ')'")
            if self._check("OP", ")"):
                raise DslSyntaxError("dangling ',' in argument list: expected an expression", comma.line, comma.col)


def parse(source: str) -> Program:
    """Parse ``source`` into a :class:`Program` or raise :class:`DslSyntaxError`."""
    return Parser(tokenize(source)).program()
