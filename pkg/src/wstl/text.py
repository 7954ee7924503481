"""Text format for weighted STL formulas.

Grammar (whitespace insignificant, ``#`` starts a line comment)::

    formula  := "TRUE" | pred | "!" formula | binop | temporal
    binop    := "(" formula ")" ("&" | "|") weights "(" formula ")"
    temporal := ("G" | "F") "[" int "," int "]" weights "(" formula ")"
    weights  := ["~"] "{" num ("," num)* "}"
    pred     := "(" affine "<=" num ")"
    affine   := term (("+" | "-") term)*
    term     := num "*" "x" int

``G`` is always, ``F`` eventually, ``xj`` the j-th signal component
(1-based). A ``~`` before a weight block marks a sparsified operator, whose
weights may be zero. Templates (:func:`parse_template`) additionally accept
``pred`` for a zero predicate and may omit weight blocks.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .formula import (Always, And, Binary, Eventually, Formula, Interval, Not, Or,
                      Pred, Temporal, TrueF, Weighted)


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan, text: str = ""):
        super().__init__(f"{message} at {span.start}:{span.end}")
        self.message = message
        self.span = span
        self.text = text

    def pretty(self) -> str:
        """Message followed by the offending line with a caret marker."""
        line_start = self.text.rfind("\n", 0, self.span.start) + 1
        line_end = self.text.find("\n", self.span.start)
        line_end = len(self.text) if line_end < 0 else line_end
        col = self.span.start - line_start
        width = max(1, min(self.span.end, line_end) - self.span.start)
        return f"{self.message}\n  {self.text[line_start:line_end]}\n  {' ' * col}{'^' * width}"


_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>x\d+)
  | (?P<kw>TRUE|pred)
  | (?P<op><=|[()\[\]{},&|!~*+\-GF])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    start: int
    end: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            end = pos + 1
            while end < len(text) and not text[end].isspace() and _TOKEN.match(text, end) is None:
                end += 1
            raise ParseError(f"unknown token {text[pos:end]!r}", SourceSpan(pos, end), text)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text), len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int, template: bool):
        self.text = text
        self.dim = dim
        self.template = template
        self.toks = _tokenize(text)
        self.i = 0

    def error(self, message, start, end=None):
        end = start if end is None else end
        end = min(max(end, start), len(self.text))
        start = min(start, len(self.text))
        raise ParseError(message, SourceSpan(start, end), self.text)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, ahead=1) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.tok
        if t.text != text:
            found = "end of input" if t.kind == "eof" else repr(t.text)
            self.error(f"expected {text!r}, found {found}", t.start, t.end)
        return self.advance()

    def parse(self) -> Formula:
        phi = self.formula()
        if self.tok.kind != "eof":
            self.error(f"unexpected trailing input {self.tok.text!r}", self.tok.start, self.tok.end)
        return phi

    def formula(self) -> Formula:
        t = self.tok
        if t.text == "TRUE":
            self.advance()
            return TrueF()
        if t.text == "pred" and self.template:
            self.advance()
            return Pred(np.zeros(self.dim), 0.0)
        if t.text == "!":
            self.advance()
            return Not(self.formula())
        if t.text in ("G", "F"):
            return self.temporal()
        if t.text == "(":
            nxt = self.peek()
            if nxt.kind == "num" or nxt.text in ("+", "-"):
                return self.pred()
            return self.binop()
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.error(f"expected a formula, found {found}", t.start, t.end)

    def number(self) -> tuple[float, int, int]:
        start = self.tok.start
        sign = 1.0
        if self.tok.text in ("+", "-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        t = self.tok
        if t.kind != "num":
            self.error(f"expected a number, found {t.text!r}", t.start, t.end)
        self.advance()
        return sign * float(t.text), start, t.end

    def integer(self) -> tuple[int, int, int]:
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            self.error(f"expected a nonnegative integer, found {t.text!r}", t.start, t.end)
        self.advance()
        return int(t.text), t.start, t.end

    def weights(self, expected: int, what: str):
        """Parse a weight block; returns ``(weights, sparsified)``."""
        start = self.tok.start
        sparsified = False
        if self.tok.text == "~":
            self.advance()
            sparsified = True
        if self.tok.text != "{":
            if self.template and not sparsified:
                return np.ones(expected), False
            self.expect("{")
        self.advance()
        vals = []
        while True:
            v, vs, ve = self.number()
            if v < 0 or (v == 0 and not sparsified):
                self.error(f"non-positive weight literal {self.text[vs:ve]}", vs, ve)
            vals.append(v)
            if self.tok.text == ",":
                self.advance()
                continue
            break
        end = self.expect("}").end
        if len(vals) != expected:
            self.error(f"weight length {len(vals)} != {what} {expected}", start, end)
        if sparsified and not any(v > 0 for v in vals):
            self.error("all weights of an operator are zero", start, end)
        return np.array(vals), sparsified

    def binop(self) -> Formula:
        self.expect("(")
        left = self.formula()
        self.expect(")")
        t = self.tok
        if t.text not in ("&", "|"):
            found = "end of input" if t.kind == "eof" else repr(t.text)
            self.error(f"expected '&' or '|', found {found}", t.start, t.end)
        self.advance()
        w, sparsified = self.weights(2, "operand count")
        self.expect("(")
        right = self.formula()
        self.expect(")")
        cls = And if t.text == "&" else Or
        return cls(left, right, weights=w, sparsified=sparsified)

    def temporal(self) -> Formula:
        op = self.advance()
        self.expect("[")
        k1, s1, _ = self.integer()
        self.expect(",")
        k2, _, e2 = self.integer()
        close = self.expect("]")
        if k1 > k2:
            self.error(f"interval k1 > k2 ([{k1},{k2}])", s1, close.end)
        w, sparsified = self.weights(k2 - k1 + 1, "interval length")
        self.expect("(")
        child = self.formula()
        self.expect(")")
        cls = Always if op.text == "G" else Eventually
        return cls(Interval(k1, k2), child, weights=w, sparsified=sparsified)

    def pred(self) -> Pred:
        self.expect("(")
        a = np.zeros(self.dim)
        seen = set()
        first = True
        while True:
            if first:
                coef, _, _ = self.number()
            else:
                sign = -1.0 if self.advance().text == "-" else 1.0
                coef, _, _ = self.number()
                coef *= sign
            first = False
            self.expect("*")
            var = self.tok
            if var.kind != "var":
                self.error(f"expected a feature like 'x1', found {var.text!r}", var.start, var.end)
            self.advance()
            j = int(var.text[1:])
            if j < 1 or j > self.dim:
                self.error(f"feature index {j} out of range 1..{self.dim}", var.start, var.end)
            if j in seen:
                self.error(f"feature x{j} appears twice", var.start, var.end)
            seen.add(j)
            a[j - 1] = coef
            if self.tok.text in ("+", "-"):
                continue
            break
        self.expect("<=")
        c, _, _ = self.number()
        self.expect(")")
        return Pred(a, c)


def parse(text: str, dim: int) -> Formula:
    """Parse formula text over a ``dim``-dimensional signal."""
    if dim < 1:
        raise ValueError(f"signal dimension must be >= 1, got {dim}")
    return _Parser(text, dim, template=False).parse()


def parse_template(text: str, dim: int) -> Formula:
    """Parse a formula structure; ``pred`` and missing weight blocks are allowed."""
    if dim < 1:
        raise ValueError(f"signal dimension must be >= 1, got {dim}")
    return _Parser(text, dim, template=True).parse()


def infer_dim(text: str) -> int:
    """Largest feature index mentioned in ``text`` (at least 1)."""
    idx = [int(m) for m in re.findall(r"x(\d+)", re.sub(r"#[^\n]*", "", text))]
    return max(idx, default=1)


def fmt_num(x: float) -> str:
    """Seven significant digits, shortened to six when the seventh is a zero.

    The choice depends only on the seven-digit rounding, so printing a
    parsed number again gives the same text.
    """
    x = float(x)
    if x == 0:
        return "0.00000"
    s7 = format(x, "#.7g")
    mantissa = s7.split("e")[0]
    if mantissa[-1] == "0":
        return format(x, "#.6g")
    return s7


def to_text(phi: Formula) -> str:
    """Canonical, fully parenthesized text of ``phi``."""
    if isinstance(phi, TrueF):
        return "TRUE"
    if isinstance(phi, Pred):
        terms = []
        for j, coef in enumerate(phi.a, start=1):
            if not terms:
                terms.append(f"{fmt_num(coef)}*x{j}")
            elif coef < 0:
                terms.append(f" - {fmt_num(-coef)}*x{j}")
            else:
                terms.append(f" + {fmt_num(coef)}*x{j}")
        return f"({''.join(terms)} <= {fmt_num(phi.c)})"
    if isinstance(phi, Not):
        return "!" + to_text(phi.child)
    if isinstance(phi, Weighted):
        block = ("~" if phi.sparsified else "") + "{" + ",".join(fmt_num(w) for w in phi.weights) + "}"
        if isinstance(phi, Binary):
            op = "&" if isinstance(phi, And) else "|"
            return f"({to_text(phi.left)}) {op}{block} ({to_text(phi.right)})"
        op = "G" if isinstance(phi, Always) else "F"
        return f"{op}[{phi.interval.k1},{phi.interval.k2}]{block}({to_text(phi.child)})"
    raise TypeError(f"not a formula node: {phi!r}")


def read_formula(path, dim: int | None = None) -> Formula:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse(text, dim if dim is not None else infer_dim(text))


def write_formula(path, phi: Formula, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.write(to_text(phi) + "\n")
