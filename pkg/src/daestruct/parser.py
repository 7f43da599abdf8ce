"""Text format for DAE models.

    model := (decl ";")+
    decl  := "var" ident ("," ident)*
           | "const" ident "=" number
           | "eq" ident ":" expr "=" expr
    expr  := sums/products over + - * / with unary minus, parentheses,
             sin|cos|exp|log|sqrt calls, Der(expr, order), integer powers
             via ^ (exponent is an integer literal, optionally negative).

`#` starts a line comment.  Named constants are substituted on use, so the
analysis only ever sees numeric literals.  An equation `lhs = rhs` is stored
as the single output lhs - rhs; when one side is the literal 0 the other
side becomes the output directly (behind an identity so the output node is
the equation's own final node).
"""

from __future__ import annotations

from dataclasses import dataclass

from .codelist import DaeModel, ModelBuilder, ModelError, Expr
from . import codelist as _cl


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = "line %d, col %d: %s" % (line, col, message)
        super().__init__(message)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class _Tok:
    kind: str  # IDENT NUM SYM EOF
    text: str
    line: int
    col: int


_SYMBOLS = ";,:=+-*/^()"
_FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
_KEYWORDS = ("var", "const", "eq", "Der", "t") + _FUNCTIONS


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("IDENT", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            if j < len(text) and text[j] == ".":
                j += 1
                while j < len(text) and text[j].isdigit():
                    j += 1
            if j < len(text) and text[j] in "eE":
                k = j + 1
                if k < len(text) and text[k] in "+-":
                    k += 1
                if k < len(text) and text[k].isdigit():
                    j = k
                    while j < len(text) and text[j].isdigit():
                        j += 1
            toks.append(_Tok("NUM", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in _SYMBOLS:
            toks.append(_Tok("SYM", ch, line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError("unexpected character %r" % ch, line, start_col)
    toks.append(_Tok("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.builder = ModelBuilder()
        self.constants: dict[str, float] = {}
        self.vars: dict[str, Expr] = {}

    # -- token helpers -------------------------------------------------

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise ParseError(
                "expected %s, got %r" % (want, tok.text or "end of input"),
                tok.line,
                tok.col,
            )
        return tok

    def at_sym(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "SYM" and tok.text == text

    # -- grammar --------------------------------------------------------

    def parse(self) -> DaeModel:
        while self.peek().kind != "EOF":
            self.decl()
        try:
            return self.builder.build()
        except ModelError as err:
            raise ParseError(str(err)) from err

    def decl(self):
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected a declaration", tok.line, tok.col)
        if tok.text == "var":
            self.var_decl()
        elif tok.text == "const":
            self.const_decl()
        elif tok.text == "eq":
            self.eq_decl()
        else:
            raise ParseError("expected var, const or eq", tok.line, tok.col)
        self.expect("SYM", ";")

    def var_decl(self):
        while True:
            tok = self.expect("IDENT")
            if tok.text in _KEYWORDS:
                raise ParseError("%r is reserved" % tok.text, tok.line, tok.col)
            try:
                self.vars[tok.text] = self.builder.variable(tok.text)
            except ModelError as err:
                raise ParseError(str(err), tok.line, tok.col) from err
            if self.at_sym(","):
                self.next()
            else:
                return

    def const_decl(self):
        tok = self.expect("IDENT")
        if tok.text in _KEYWORDS:
            raise ParseError("%r is reserved" % tok.text, tok.line, tok.col)
        self.expect("SYM", "=")
        neg = False
        if self.at_sym("-"):
            self.next()
            neg = True
        num = self.expect("NUM")
        value = -float(num.text) if neg else float(num.text)
        try:
            self.builder.constant(tok.text, value)
        except ModelError as err:
            raise ParseError(str(err), tok.line, tok.col) from err
        self.constants[tok.text] = value

    def eq_decl(self):
        name = self.expect("IDENT")
        self.expect("SYM", ":")
        if self.at_literal_zero():
            # "0 = rhs" is recorded the same way as "rhs = 0"
            self.skip_literal_zero()
            self.expect("SYM", "=")
            lhs, rhs_zero = self.expr(), True
        else:
            lhs = self.expr()
            self.expect("SYM", "=")
            rhs_zero = self.at_literal_zero()
            if rhs_zero:
                self.skip_literal_zero()
        try:
            if rhs_zero:
                self.builder.equation(name.text, lhs)
            else:
                self.builder.equation(name.text, lhs, self.expr())
        except ModelError as err:
            raise ParseError(str(err), name.line, name.col) from err

    def at_literal_zero(self) -> bool:
        tok = self.peek()
        if tok.kind != "NUM" or float(tok.text) != 0.0:
            return False
        after = self.toks[self.pos + 1]
        return after.kind == "SYM" and after.text in (";", "=")

    def skip_literal_zero(self):
        self.next()

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "SYM" and self.peek().text in "+-":
            op = self.next().text
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().kind == "SYM" and self.peek().text in "*/":
            op = self.next().text
            rhs = self.factor()
            e = e * rhs if op == "*" else e / rhs
        return e

    def factor(self) -> Expr:
        if self.at_sym("-"):
            self.next()
            return -self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at_sym("^"):
            self.next()
            return base ** self.exponent()
        return base

    def exponent(self) -> int:
        neg = False
        if self.at_sym("-"):
            self.next()
            neg = True
        tok = self.expect("NUM")
        if "." in tok.text or "e" in tok.text or "E" in tok.text:
            raise ParseError("non-integer exponent %r" % tok.text, tok.line, tok.col)
        k = int(tok.text)
        return -k if neg else k

    def int_literal(self) -> int:
        tok = self.expect("NUM")
        if "." in tok.text or "e" in tok.text or "E" in tok.text:
            raise ParseError(
                "expected an integer, got %r" % tok.text, tok.line, tok.col
            )
        return int(tok.text)

    def atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "NUM":
            return self.builder._coerce(float(tok.text))
        if tok.kind == "SYM" and tok.text == "(":
            e = self.expr()
            self.expect("SYM", ")")
            return e
        if tok.kind == "IDENT":
            name = tok.text
            if name == "Der":
                self.expect("SYM", "(")
                arg = self.expr()
                self.expect("SYM", ",")
                p = self.int_literal()
                self.expect("SYM", ")")
                if p < 0:
                    raise ParseError("derivative order must be >= 0", tok.line, tok.col)
                return arg.der(p)
            if name in _FUNCTIONS:
                self.expect("SYM", "(")
                arg = self.expr()
                self.expect("SYM", ")")
                return getattr(_cl, name)(arg)
            if name == "t":
                return self.builder.time
            if name in self.vars:
                return self.vars[name]
            if name in self.constants:
                return self.builder._coerce(self.constants[name])
            raise ParseError("unknown identifier %r" % name, tok.line, tok.col)
        raise ParseError(
            "expected an expression, got %r" % (tok.text or "end of input"),
            tok.line,
            tok.col,
        )


def parse_model(text: str) -> DaeModel:
    """Parse model source text into a validated DaeModel."""
    return _Parser(text).parse()
