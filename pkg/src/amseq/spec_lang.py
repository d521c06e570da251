"""Text form of sequence expressions.

Grammar (whitespace is ignored)::

    expr    := factor {('*' | '/') factor}
    factor  := 'omega' ['^' real] | 'log' ['^' real] | 'geom(' rational ')'
             | 'D' int '(' expr ')' | 'Dinv' int '(' expr ')'
             | 'min(' expr ',' expr {',' expr} ')' | 'max(' ... ')' | 'sum(' ... ')'
             | 'scale(' rational ',' expr ')'
             | 'prefix(' path | '[' values ']' ')'
             | 'override(' prefix-factor ',' expr ')'
             | 'pw(' rulename | n ':' value {',' n ':' value} ')'
             | '(' expr ')'
    real    := decimal | '(' int '/' int ')'

Only ``omega`` and ``log`` factors may follow ``/``; they are stored with the
exponent negated, so ``omega/log^2`` and ``omega*log^-2`` parse to the same tree.
"""
from __future__ import annotations

import os
import re
from fractions import Fraction
from typing import List, Optional, Tuple

from .expr import (
    Ampliation,
    Dilution,
    Geom,
    LogPow,
    Max,
    Min,
    OmegaPow,
    PiecewiseConstant,
    PrefixOverride,
    Product,
    Scale,
    SeqExpr,
    Sum,
)


class ParseError(ValueError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


class PrefixFileError(ValueError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)"
    r"|(?P<op>[()*/^,:\[\]+-]))"
)


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
        if kind == "id" and m.group(kind) in _RAW_NAMES:
            pos = _skip_raw(text, pos, out)
    out.append(("end", "", n))
    return out


_RAW_NAMES = ("prefix", "pw")


def _skip_raw(text: str, pos: int, out: list) -> int:
    """Leave a raw argument (file path, value list) untokenized up to its ')'."""
    while pos < len(text) and text[pos].isspace():
        pos += 1
    if pos >= len(text) or text[pos] != "(":
        return pos
    out.append(("op", "(", pos))
    depth, j = 1, pos + 1
    while j < len(text):
        if text[j] in "([":
            depth += 1
        elif text[j] in ")]":
            depth -= 1
            if depth == 0 and text[j] == ")":
                return j
        j += 1
    raise ParseError("unterminated argument", pos + 1)


class _Parser:
    def __init__(self, text: str, base_dir: Optional[str], monotonize: bool):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.base_dir = base_dir
        self.monotonize = monotonize
        self.notes: List[str] = []

    # -- token helpers
    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        t = self.next()
        if t[1] != value:
            raise ParseError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        return t

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value:
            self.i += 1
            return True
        return False

    # -- grammar
    def parse(self) -> SeqExpr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", t[2])
        return e

    def expr(self) -> SeqExpr:
        factors = [self.factor()]
        while self.peek()[1] in ("*", "/"):
            op = self.next()
            f = self.factor()
            if op[1] == "/":
                if isinstance(f, OmegaPow):
                    f = OmegaPow(-f.p)
                elif isinstance(f, LogPow):
                    f = LogPow(-f.r)
                else:
                    raise ParseError("only omega and log factors may be divided by", op[2])
            factors.append(f)
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def signed_number(self) -> Fraction:
        t = self.peek()
        sign = 1
        if t[1] in ("+", "-"):
            self.next()
            sign = -1 if t[1] == "-" else 1
        t = self.next()
        if t[0] != "num":
            raise ParseError("expected a number", t[2])
        return sign * Fraction(t[1])

    def real(self) -> Fraction:
        if self.accept("("):
            v = self.rational()
            self.expect(")")
            return v
        return self.signed_number()

    def rational(self) -> Fraction:
        v = self.signed_number()
        if self.accept("/"):
            t = self.peek()
            d = self.signed_number()
            if d == 0:
                raise ParseError("zero denominator", t[2])
            v = v / d
        return v

    def integer(self) -> int:
        t = self.next()
        if t[0] != "num" or not t[1].isdigit():
            raise ParseError("expected an integer", t[2])
        return int(t[1])

    def arglist(self) -> Tuple[SeqExpr, ...]:
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        return tuple(args)

    def raw_arg(self) -> Tuple[str, int]:
        """Text up to the matching ')' (paths and inline lists)."""
        t = self.expect("(")
        start = t[2] + 1
        depth = 1
        pos = start
        while pos < len(self.text):
            ch = self.text[pos]
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
                if depth == 0 and ch == ")":
                    break
            pos += 1
        else:
            raise ParseError("unterminated argument", start)
        # resync the token stream past the closing parenthesis
        while self.peek()[2] <= pos and self.peek()[0] != "end":
            self.i += 1
        return self.text[start:pos].strip(), start

    def factor(self) -> SeqExpr:
        t = self.next()
        kind, val, pos = t
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind != "id":
            raise ParseError(f"unexpected {val or 'end of input'!r}", pos)
        if val == "omega":
            return OmegaPow(self.real() if self.accept("^") else Fraction(1))
        if val == "log":
            return LogPow(self.real() if self.accept("^") else Fraction(1))
        if val == "geom":
            self.expect("(")
            q = self.rational()
            self.expect(")")
            if not 0 < q < 1:
                raise ParseError("geom ratio must lie in (0, 1)", pos)
            return Geom(q)
        m = re.fullmatch(r"(D|Dinv)(\d*)", val)
        if m:
            k = int(m.group(2)) if m.group(2) else self.integer()
            if k < 1:
                raise ParseError("factor must be >= 1", pos)
            (child,) = self._one_arg()
            return Ampliation(k, child) if m.group(1) == "D" else Dilution(k, child)
        if val in ("min", "max", "sum"):
            args = self.arglist()
            if len(args) < 2:
                raise ParseError(f"{val} needs at least two arguments", pos)
            return {"min": Min, "max": Max, "sum": Sum}[val](args)
        if val == "scale":
            self.expect("(")
            c = self.rational()
            if c <= 0:
                raise ParseError("scale factor must be positive", pos)
            self.expect(",")
            child = self.expr()
            self.expect(")")
            return Scale(c, child)
        if val == "prefix":
            raw, start = self.raw_arg()
            return self._prefix(raw, start)
        if val == "override":
            self.expect("(")
            t2 = self.next()
            if t2[1] != "prefix":
                raise ParseError("override expects a prefix(...) first argument", t2[2])
            raw, start = self.raw_arg()
            pre = self._prefix(raw, start)
            self.expect(",")
            child = self.expr()
            self.expect(")")
            return PrefixOverride(pre.values, child, source=pre.source)
        if val == "pw":
            raw, start = self.raw_arg()
            return self._piecewise(raw, start)
        raise ParseError(f"unknown name {val!r}", pos)

    def _one_arg(self):
        args = self.arglist()
        if len(args) != 1:
            raise ParseError("expected one argument", self.peek()[2])
        return args

    def _prefix(self, raw: str, start: int) -> PrefixOverride:
        if raw.startswith("["):
            if not raw.endswith("]"):
                raise ParseError("unterminated value list", start)
            body = raw[1:-1].strip()
            try:
                vals = [Fraction(v.strip()) for v in body.split(",")] if body else []
            except (ValueError, ZeroDivisionError) as exc:
                raise ParseError(f"bad value in list: {exc}", start) from None
            vals = _checked(vals, "inline prefix", self.monotonize, self.notes)
            return PrefixOverride(tuple(vals), None, source=None)
        path = raw
        full = path if os.path.isabs(path) or self.base_dir is None else os.path.join(self.base_dir, path)
        vals, notes = load_prefix(full, self.monotonize)
        self.notes.extend(notes)
        return PrefixOverride(tuple(vals), None, source=path)

    def _piecewise(self, raw: str, start: int) -> PiecewiseConstant:
        if ":" not in raw:
            from . import rules

            if raw not in rules.names():
                raise ParseError(f"unknown piecewise rule {raw!r}", start)
            return PiecewiseConstant(rule=raw)
        bps, vals = [], []
        for item in raw.split(","):
            try:
                n, v = item.split(":")
                bps.append(int(n))
                vals.append(Fraction(v.strip()))
            except ValueError:
                raise ParseError(f"bad piece {item.strip()!r}", start) from None
        try:
            return PiecewiseConstant(tuple(bps), tuple(vals))
        except ValueError as exc:
            raise ParseError(str(exc), start) from None


def _checked(vals, where, monotonize, notes):
    for i, v in enumerate(vals):
        if v < 0 and not monotonize:
            raise PrefixFileError(f"{where}: negative value at entry {i + 1}")
    bad = next((i for i in range(1, len(vals)) if vals[i] > vals[i - 1]), None)
    if bad is not None or any(v < 0 for v in vals):
        if not monotonize:
            raise PrefixFileError(f"{where}: values increase at entry {bad + 1}")
        if any(v < 0 for v in vals):
            raise PrefixFileError(f"{where}: negative values cannot be monotonized")
        vals = sorted(vals, reverse=True)
        notes.append(f"{where}: input was not nonincreasing and has been monotonized")
    return vals


def load_prefix(path: str, monotonize: bool = False):
    """Read one value per line (decimal or p/q); '#' starts a comment."""
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                vals.append(Fraction(line))
            except (ValueError, ZeroDivisionError):
                raise PrefixFileError(f"{path}:{lineno}: cannot read {line!r}") from None
    notes: List[str] = []
    vals = _checked(vals, path, monotonize, notes)
    return vals, notes


def parse(text: str, base_dir: Optional[str] = None, monotonize: bool = False) -> SeqExpr:
    return _Parser(text, base_dir, monotonize).parse()


def parse_with_notes(text: str, base_dir: Optional[str] = None, monotonize: bool = False):
    p = _Parser(text, base_dir, monotonize)
    return p.parse(), p.notes


# --------------------------------------------------------------------------
# printing


def _decimal(x: Fraction) -> Optional[str]:
    d = x.denominator
    a = b = 0
    while d % 2 == 0:
        d //= 2
        a += 1
    while d % 5 == 0:
        d //= 5
        b += 1
    if d != 1:
        return None
    k = max(a, b)
    scaled = abs(x.numerator) * (10 ** k // x.denominator)
    s = str(scaled)
    if k:
        s = s.rjust(k + 1, "0")
        s = s[:-k] + "." + s[-k:]
    return ("-" if x < 0 else "") + s


def _real(x: Fraction) -> str:
    s = _decimal(x)
    return s if s is not None else f"({x.numerator}/{x.denominator})"


def _rat(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def to_string(e: SeqExpr) -> str:
    if isinstance(e, OmegaPow):
        return "omega" if e.p == 1 else f"omega^{_real(e.p)}"
    if isinstance(e, LogPow):
        return "log" if e.r == 1 else f"log^{_real(e.r)}"
    if isinstance(e, Geom):
        return f"geom({_rat(e.q)})"
    if isinstance(e, Product):
        return "*".join(f"({to_string(f)})" if isinstance(f, Product) else to_string(f) for f in e.factors)
    if isinstance(e, Scale):
        return f"scale({_rat(e.c)},{to_string(e.child)})"
    if isinstance(e, Ampliation):
        return f"D{e.m}({to_string(e.child)})"
    if isinstance(e, Dilution):
        return f"Dinv{e.m}({to_string(e.child)})"
    if isinstance(e, (Min, Max, Sum)):
        name = {Min: "min", Max: "max", Sum: "sum"}[type(e)]
        return f"{name}({','.join(to_string(t) for t in e.terms)})"
    if isinstance(e, PrefixOverride):
        inner = e.source if e.source is not None else "[" + ",".join(_rat(v) for v in e.values) + "]"
        pre = f"prefix({inner})"
        return pre if e.child is None else f"override({pre},{to_string(e.child)})"
    if isinstance(e, PiecewiseConstant):
        if e.rule is not None:
            return f"pw({e.rule})"
        return "pw(" + ",".join(f"{b}:{_rat(v)}" for b, v in zip(e.breakpoints, e.values)) + ")"
    raise TypeError(f"cannot print {e!r}")
