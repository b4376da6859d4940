"""Problem documents: kernels, an atlas of variables, and named functionals.

Two input syntaxes are accepted.  JSON (canonical)::

    {"grid_m": 2,
     "kernels": {"e": ["1", "1"]},
     "variables": {"X": [1, "e"], "Y": [2, "e"]},
     "functionals": {"F": "X^2 + 1/2*Y"},
     "metric": "flat",
     "hbar_order": "auto"}

and a line-oriented block syntax (``#`` starts a comment)::

    grid_m 2
    metric flat
    hbar_order auto
    kernel e = 1 1
    var X = 1 e
    var Y = 2 e
    fun F = X^2 + 1/2*Y

Functional expressions use identifiers, integer and ``p/q`` literals,
``+ - * ^`` with nonnegative integer exponents, and parentheses.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .functionals import PolynomialFunctional, VariableAtlas
from .kernels import Kernel, MetricProfile, make_kernel
from .rationals import RationalFormatError, format_rational, to_fraction

E_SYNTAX = "E_SYNTAX"
E_SCHEMA = "E_SCHEMA"
E_UNRESOLVED = "E_UNRESOLVED"
E_GRID = "E_GRID"
E_RATIONAL = "E_RATIONAL"
E_COMPONENT = "E_COMPONENT"
E_DUPLICATE = "E_DUPLICATE"
E_EXPR = "E_EXPR"
E_CYCLE = "E_CYCLE"

_TOP_KEYS = ("grid_m", "kernels", "variables", "functionals", "metric", "hbar_order")


class DocumentError(ValueError):
    """A structured diagnostic: a stable code, a message and an optional position."""

    def __init__(self, code: str, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.line = line
        self.column = column

    def __str__(self):
        where = ""
        if self.line is not None:
            where = f" at line {self.line}" + (f", column {self.column}" if self.column is not None else "")
        return f"{self.code}{where}: {self.message}"

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "line": self.line, "column": self.column}


# -- expression DSL ---------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            break
        num, ident, op = m.groups()
        col = m.start(m.lastindex) + 1 if m.lastindex else pos + 1
        if num is not None:
            tokens.append(("num", num, col))
        elif ident is not None:
            tokens.append(("ident", ident, col))
        elif op is not None:
            if op not in "+-*^()/":
                raise DocumentError(E_EXPR, f"unexpected character {op!r} in expression {src!r}", column=col)
            tokens.append(("op", op, col))
        pos = m.end()
    tokens.append(("end", "", len(src) + 1))
    return tokens


class _ExprParser:
    def __init__(self, src: str, resolve):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.resolve = resolve

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise DocumentError(E_EXPR, f"{msg} in expression {self.src!r}", column=tok[2])

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("empty expression")
        value = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return value

    def expr(self):
        value = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.unary()
        while self.peek()[:2] == ("op", "*"):
            self.take()
            value = value * self.unary()
        return value

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.peek()
            if tok[0] != "num":
                self.fail("exponent must be a nonnegative integer literal")
            self.take()
            base = base ** int(tok[1])
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.take()
            if self.peek()[:2] == ("op", "/"):
                self.take()
                den = self.peek()
                if den[0] != "num":
                    self.fail("division is only allowed between integer literals")
                self.take()
                if int(den[1]) == 0:
                    self.fail("zero denominator", den)
                return self.resolve(Fraction(int(text), int(den[1])), tok)
            return self.resolve(Fraction(int(text)), tok)
        if kind == "ident":
            self.take()
            return self.resolve(text, tok)
        if tok[:2] == ("op", "("):
            self.take()
            value = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.fail("expected ')'")
            self.take()
            return value
        if kind == "end":
            self.fail("unexpected end of expression")
        self.fail(f"unexpected {text!r}")


def parse_expression(src: str, atlas: VariableAtlas,
                     named: dict[str, PolynomialFunctional] | None = None) -> PolynomialFunctional:
    named = named or {}

    def resolve(item, tok):
        if isinstance(item, Fraction):
            return PolynomialFunctional.constant(atlas, item)
        if item in named:
            return named[item]
        if item in atlas.names:
            return atlas.var(item)
        raise DocumentError(E_UNRESOLVED, f"unresolved name {item!r} in expression {src!r}", column=tok[2])

    return _ExprParser(src, resolve).parse()


# -- document model ---------------------------------------------------------

@dataclass
class ProblemDocument:
    grid_m: int
    kernels: dict[str, Kernel] = field(default_factory=dict)
    variables: dict[str, tuple[int, str]] = field(default_factory=dict)
    functionals: dict[str, str] = field(default_factory=dict)
    metric: str = "flat"
    hbar_order: int | str = "auto"

    def __post_init__(self):
        self._atlas = None
        self._parsed = None

    def __eq__(self, other):
        if not isinstance(other, ProblemDocument):
            return NotImplemented
        return all(getattr(self, k) == getattr(other, k) for k in _TOP_KEYS)

    @property
    def atlas(self) -> VariableAtlas:
        if self._atlas is None:
            self._atlas = VariableAtlas.build(
                (name, comp, self.kernels[kname]) for name, (comp, kname) in self.variables.items()
            )
        return self._atlas

    @property
    def metric_profile(self) -> MetricProfile:
        return MetricProfile.parse(self.metric)

    def parsed_functionals(self) -> dict[str, PolynomialFunctional]:
        if self._parsed is None:
            self._parsed = _resolve_functionals(self.functionals, self.atlas)
        return self._parsed

    def functional(self, ref: str) -> PolynomialFunctional:
        """A named functional, or failing that, ``ref`` parsed as an expression."""
        named = self.parsed_functionals()
        if ref in named:
            return named[ref]
        return parse_expression(ref, self.atlas, named)

    def to_json(self) -> dict:
        return {
            "grid_m": self.grid_m,
            "kernels": {k: [format_rational(v) for v in h.values] for k, h in self.kernels.items()},
            "variables": {n: [c, k] for n, (c, k) in self.variables.items()},
            "functionals": dict(self.functionals),
            "metric": self.metric,
            "hbar_order": self.hbar_order,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"

    def to_block_text(self) -> str:
        lines = [f"grid_m {self.grid_m}", f"metric {self.metric}", f"hbar_order {self.hbar_order}"]
        for k, h in self.kernels.items():
            lines.append(f"kernel {k} = " + " ".join(format_rational(v) for v in h.values))
        for n, (c, k) in self.variables.items():
            lines.append(f"var {n} = {c} {k}")
        for n, src in self.functionals.items():
            lines.append(f"fun {n} = {src}")
        return "\n".join(lines) + "\n"


def _resolve_functionals(sources: dict[str, str], atlas: VariableAtlas) -> dict[str, PolynomialFunctional]:
    """Parse named functionals; each may refer to variables and to other functionals."""
    done: dict[str, PolynomialFunctional] = {}
    active: list[str] = []

    def build(name: str) -> PolynomialFunctional:
        if name in done:
            return done[name]
        if name in active:
            raise DocumentError(E_CYCLE, f"functional definitions form a cycle: {' -> '.join(active + [name])}")
        active.append(name)
        src = sources[name]

        def resolve(item, tok):
            if isinstance(item, Fraction):
                return PolynomialFunctional.constant(atlas, item)
            if item in sources:
                return build(item)
            if item in atlas.names:
                return atlas.var(item)
            raise DocumentError(E_UNRESOLVED, f"functional {name!r} refers to unresolved name {item!r}",
                                column=tok[2])

        done[name] = _ExprParser(src, resolve).parse()
        active.pop()
        return done[name]

    for name in sources:
        build(name)
    return done


# -- parsing ----------------------------------------------------------------

def parse_document(text: bytes | str) -> ProblemDocument:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentError(E_SYNTAX, f"document is not valid UTF-8: {exc.reason}") from None
    if text.lstrip()[:1] in ("{", "["):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentError(E_SYNTAX, exc.msg, exc.lineno, exc.colno) from None
        return _from_mapping(raw, lines=None)
    raw, lines = _parse_block(text)
    return _from_mapping(raw, lines)


def _parse_block(text: str):
    raw: dict = {"kernels": {}, "variables": {}, "functionals": {}}
    lines: dict = {}
    offsets: dict = {}
    lines["offsets"] = offsets
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        col = len(body) - len(body.lstrip()) + 1
        head, _, rest = body.strip().partition(" ")
        rest = rest.strip()
        if head in ("grid_m", "metric", "hbar_order"):
            if not rest or " " in rest:
                raise DocumentError(E_SYNTAX, f"'{head}' takes exactly one value", lineno, col)
            if head in raw:
                raise DocumentError(E_DUPLICATE, f"'{head}' given twice", lineno, col)
            if head == "grid_m" or (head == "hbar_order" and rest != "auto"):
                if not re.fullmatch(r"-?\d+", rest):
                    raise DocumentError(E_SCHEMA, f"'{head}' must be an integer, got {rest!r}", lineno, col)
                raw[head] = int(rest)
            else:
                raw[head] = rest
            lines[head] = lineno
            continue
        if head in ("kernel", "var", "fun"):
            name, eq, value = rest.partition("=")
            name = name.strip()
            if not eq or not name.isidentifier():
                raise DocumentError(E_SYNTAX, f"expected '{head} <name> = ...'", lineno, col)
            section = {"kernel": "kernels", "var": "variables", "fun": "functionals"}[head]
            if name in raw[section]:
                raise DocumentError(E_DUPLICATE, f"{head} {name!r} defined twice", lineno, col)
            value = value.strip()
            if head == "kernel":
                raw[section][name] = value.split()
            elif head == "var":
                parts = value.split()
                if len(parts) != 2:
                    raise DocumentError(E_SYNTAX, "expected 'var <name> = <component> <kernel>'", lineno, col)
                comp = int(parts[0]) if re.fullmatch(r"-?\d+", parts[0]) else parts[0]
                raw[section][name] = [comp, parts[1]]
            else:
                raw[section][name] = value
                # expression columns are reported relative to the whole line
                after_eq = body.index("=") + 1
                offsets[name] = after_eq + len(body[after_eq:]) - len(body[after_eq:].lstrip())
            lines[(section, name)] = lineno
            continue
        raise DocumentError(E_SYNTAX, f"unknown statement {head!r}", lineno, col)
    return raw, lines


def _from_mapping(raw, lines) -> ProblemDocument:
    def where(key):
        return lines.get(key) if lines else None

    if not isinstance(raw, dict):
        raise DocumentError(E_SCHEMA, "document root must be an object")
    unknown = [k for k in raw if k not in _TOP_KEYS]
    if unknown:
        raise DocumentError(E_SCHEMA, f"unknown top-level key(s): {', '.join(map(str, unknown))}")
    if "grid_m" not in raw:
        raise DocumentError(E_SCHEMA, "missing required key 'grid_m'")
    m = raw["grid_m"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise DocumentError(E_SCHEMA, f"grid_m must be a positive integer, got {m!r}", where("grid_m"))

    kernels_raw = raw.get("kernels", {})
    if not isinstance(kernels_raw, dict):
        raise DocumentError(E_SCHEMA, "'kernels' must be an object")
    kernels: dict[str, Kernel] = {}
    for name, spec in kernels_raw.items():
        line = where(("kernels", name))
        if isinstance(spec, dict):
            if set(spec) != {"m", "values"}:
                raise DocumentError(E_SCHEMA, f"kernel {name!r}: object form needs exactly 'm' and 'values'", line)
            if spec["m"] != m:
                raise DocumentError(E_GRID, f"kernel {name!r} declares m={spec['m']} but grid_m={m}", line)
            spec = spec["values"]
        if not isinstance(spec, list):
            raise DocumentError(E_SCHEMA, f"kernel {name!r} must be a list of rationals", line)
        try:
            values = [to_fraction(v) for v in spec]
        except RationalFormatError as exc:
            raise DocumentError(E_RATIONAL, f"kernel {name!r}: {exc}", line) from None
        if len(values) != m:
            raise DocumentError(E_GRID, f"kernel {name!r} has {len(values)} cell values but grid_m={m}", line)
        kernels[name] = make_kernel(values, m)

    vars_raw = raw.get("variables", {})
    if not isinstance(vars_raw, dict):
        raise DocumentError(E_SCHEMA, "'variables' must be an object")
    variables: dict[str, tuple[int, str]] = {}
    for name, spec in vars_raw.items():
        line = where(("variables", name))
        if not isinstance(name, str) or not name.isidentifier():
            raise DocumentError(E_SCHEMA, f"variable name {name!r} is not an identifier", line)
        if not (isinstance(spec, list) and len(spec) == 2):
            raise DocumentError(E_SCHEMA, f"variable {name!r} must be [component, kernel name]", line)
        comp, kname = spec
        if comp not in (1, 2) or isinstance(comp, bool):
            raise DocumentError(E_COMPONENT, f"variable {name!r}: component must be 1 or 2, got {comp!r}", line)
        if not isinstance(kname, str):
            raise DocumentError(E_SCHEMA, f"variable {name!r}: kernel reference must be a name", line)
        if kname not in kernels:
            raise DocumentError(E_UNRESOLVED, f"variable {name!r} refers to undefined kernel {kname!r}", line)
        variables[name] = (comp, kname)

    funs_raw = raw.get("functionals", {})
    if not isinstance(funs_raw, dict):
        raise DocumentError(E_SCHEMA, "'functionals' must be an object")
    for name, src in funs_raw.items():
        line = where(("functionals", name))
        if not isinstance(name, str) or not name.isidentifier():
            raise DocumentError(E_SCHEMA, f"functional name {name!r} is not an identifier", line)
        if name in variables:
            raise DocumentError(E_DUPLICATE, f"functional {name!r} shadows a variable of the same name", line)
        if not isinstance(src, str):
            raise DocumentError(E_SCHEMA, f"functional {name!r} must be an expression string", line)

    metric = raw.get("metric", "flat")
    if metric not in ("flat", "phase_space", "phase"):
        raise DocumentError(E_SCHEMA, f"metric must be 'flat' or 'phase_space', got {metric!r}", where("metric"))
    order = raw.get("hbar_order", "auto")
    if order != "auto" and (not isinstance(order, int) or isinstance(order, bool) or order < 0):
        raise DocumentError(E_SCHEMA, f"hbar_order must be a nonnegative integer or 'auto', got {order!r}",
                            where("hbar_order"))

    doc = ProblemDocument(m, kernels, variables, dict(funs_raw), metric, order)
    try:
        doc.parsed_functionals()
    except DocumentError as exc:
        if lines and exc.line is None:
            name = _failing_functional(exc, funs_raw)
            if name:
                exc.line = lines.get(("functionals", name))
                if exc.column is not None:
                    exc.column += lines["offsets"].get(name, 0)
        raise
    return doc


def _failing_functional(exc: DocumentError, sources: dict[str, str]) -> str | None:
    for name, src in sources.items():
        if repr(src) in exc.message or f"functional {name!r}" in exc.message:
            return name
    return None
