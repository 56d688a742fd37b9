"""LL(1) parser, name resolution and canonical formatting for model documents.

A document is a sequence of line statements::

    chart 3
    bundle E rank 6
    poly f = 3/2*x1^2*x3 - x2
    form H = x1*d1,2 - 3*d1,3
    tensor G [2,2,3] { (1,2,1): x1; (2,1,3): f }
    base A rank 1 anchor RHO structure C
    bracket B = dorfman k=1
    precalc P = cartan k=2
    twistdata X = extract_twist bracket=B reference=P
    check classify B degree=2 as main

Names must be declared before use.  Indices in literals are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..chart import Form, _sort_sign
from ..errors import PolySyntaxError
from ..poly import Poly, _PolyParser
from .lexer import ModelError, tokenize

__all__ = [
    "ModelDoc",
    "parse_model",
    "format_model",
    "BUILTINS",
    "AXIOMS",
    "ModelError",
]


# -- statement nodes ---------------------------------------------------------


@dataclass
class Stmt:
    line: int
    col: int
    comment: str = field(default=None, kw_only=True)

    def text(self):
        raise NotImplementedError

    def render(self):
        body = self.text()
        if self.comment is not None:
            return f"{body}  # {self.comment}" if body else f"# {self.comment}"
        return body


@dataclass
class Comment(Stmt):
    def text(self):
        return ""


@dataclass
class Blank(Stmt):
    def text(self):
        return ""


@dataclass
class ChartDecl(Stmt):
    n: int

    def text(self):
        return f"chart {self.n}"


@dataclass
class BundleDecl(Stmt):
    name: str
    rank: int

    def text(self):
        return f"bundle {self.name} rank {self.rank}"


@dataclass
class PolyDecl(Stmt):
    name: str
    poly: Poly

    def text(self):
        return f"poly {self.name} = {self.poly}"


@dataclass
class FormDecl(Stmt):
    name: str
    form: Form

    def text(self):
        return f"form {self.name} = {render_form(self.form)}"


@dataclass
class TensorDecl(Stmt):
    name: str
    shape: tuple
    entries: dict  # 0-based index tuple -> Poly or poly name

    def text(self):
        shape = ",".join(str(s) for s in self.shape)
        items = []
        for key in sorted(self.entries):
            idx = ",".join(str(i + 1) for i in key)
            items.append(f"({idx}): {self.entries[key]}")
        body = "; ".join(items)
        return f"tensor {self.name} [{shape}] {{ {body} }}" if body else f"tensor {self.name} [{shape}] {{ }}"


@dataclass
class BaseDecl(Stmt):
    name: str
    rank: int
    anchor: str
    structure: str = None

    def text(self):
        out = f"base {self.name} rank {self.rank} anchor {self.anchor}"
        return out + (f" structure {self.structure}" if self.structure else "")


@dataclass
class BuiltinDecl(Stmt):
    kind: str
    name: str
    builtin: str
    args: tuple  # ((key, value), ...); value is int or a name

    def arg(self, key, default=None):
        for k, v in self.args:
            if k == key:
                return v
        return default

    def text(self):
        args = "".join(f" {k}={v}" for k, v in self.args)
        return f"{self.kind} {self.name} = {self.builtin}{args}"


@dataclass
class CheckDirective(Stmt):
    axiom: str
    target: str
    options: dict
    alias: str = None

    @property
    def name(self):
        return self.alias or f"{self.axiom} {self.target}"

    def text(self):
        out = f"check {self.axiom} {self.target}"
        for key in ("degree", "seed", "samples"):
            if key in self.options:
                out += f" {key}={self.options[key]}"
        return out + (f" as {self.alias}" if self.alias else "")


@dataclass
class ModelDoc:
    statements: list
    nvars: int
    symbols: dict  # name -> (kind, statement)

    @property
    def checks(self):
        return [s for s in self.statements if isinstance(s, CheckDirective)]

    def declaration(self, name):
        return self.symbols[name][1]

    def format(self):
        return format_model(self)


# -- vocabulary ----------------------------------------------------------------

# builtin -> (declaration kind, {arg: accepted kinds}, required args)
BUILTINS = {
    "dorfman": ("bracket", {"k": ("int",)}, ("k",)),
    "standard": ("bracket", {"pc": ("precalc",)}, ("pc",)),
    "twist": ("bracket", {"bracket": ("bracket",), "form": ("form",), "h": ("tensor",)}, ("bracket",)),
    "cartan": ("precalc", {"k": ("int",)}, ("k",)),
    "connection": ("precalc", {"rank": ("int", "bundle"), "gamma": ("tensor",), "k": ("int",)}, ("rank", "k")),
    "lie_algebroid": ("precalc", {"base": ("base",), "k": ("int",)}, ("base", "k")),
    "zero_d": (
        "precalc",
        {
            "base": ("base",),
            "z": ("int", "bundle"),
            "r": ("int", "bundle"),
            "nabla": ("tensor",),
            "iota": ("tensor",),
            "d0": ("tensor",),
        },
        ("z",),
    ),
    "induce": ("precalc", {"bracket": ("bracket",)}, ("bracket",)),
    "extract_twist": (
        "twistdata",
        {"bracket": ("bracket",), "reference": ("precalc",), "phi": ("tensor",)},
        ("bracket", "reference"),
    ),
}

DECL_KINDS = ("bracket", "precalc", "twistdata")

AXIOMS = {
    "right_leibniz": "bracket",
    "locality": "bracket",
    "symmetric_part": "bracket",
    "metric_invariance": "bracket",
    "anchor_morphism": "bracket",
    "jacobi": "bracket",
    "classify": "bracket",
    "metric": "bracket",
    "split": "bracket",
    "precalculus": "precalc",
    "reconstruction": "twistdata",
}

KEYWORDS = ("chart", "bundle", "poly", "form", "tensor", "base", "check") + DECL_KINDS
CHECK_OPTIONS = ("degree", "seed", "samples")


# -- forms -------------------------------------------------------------------


def render_form(form):
    if not form.coeffs:
        return "0*d" + ",".join(str(i + 1) for i in range(form.degree))
    parts = []
    for key in sorted(form.coeffs):
        c = form.coeffs[key]
        idx = "d" + ",".join(str(i + 1) for i in key)
        if c == 1:
            parts.append(idx)
        elif c == -1:
            parts.append("-" + idx)
        elif len(c.terms) == 1:
            parts.append(f"{c}*{idx}")
        else:
            parts.append(f"({c})*{idx}")
    return " + ".join(parts).replace("+ -", "- ")


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.nvars = None
        self.symbols = {}
        self.statements = []

    # token helpers
    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, tok, message, expected=None, kind="syntax"):
        return ModelError(message, tok.line, tok.col, kind, tok.describe(), expected)

    def semantic(self, tok, message, related=None):
        return ModelError(message, tok.line, tok.col, "semantic", related=related)

    def expect(self, kind, value=None, what=None):
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            label = what or (repr(value) if value is not None else kind)
            raise self.error(tok, f"expected {label}", [label])
        return self.take()

    def expect_int(self, what="integer"):
        return int(self.expect("int", what=what).value)

    def expect_name(self, what="name"):
        tok = self.peek()
        if tok.kind == "var":
            raise self.semantic(tok, f"{tok.value!r} is a coordinate and cannot be used as a name")
        tok = self.expect("ident", what=what)
        return tok

    def end_of_statement(self, stmt):
        tok = self.peek()
        if tok.kind == "comment":
            stmt.comment = self.take().value
            tok = self.peek()
        if tok.kind == "newline":
            self.take()
        elif tok.kind != "eof":
            raise self.error(tok, "expected end of statement", ["end of line"])
        return stmt

    # symbols
    def declare(self, tok, name, kind, stmt):
        if name in KEYWORDS or name in BUILTINS:
            raise self.semantic(tok, f"{name!r} is a reserved word")
        if name in self.symbols:
            prev = self.symbols[name][1]
            raise self.semantic(tok, f"name {name!r} is already declared", related=prev.line)
        self.symbols[name] = (kind, stmt)

    def resolve(self, tok, kinds):
        name = tok.value
        if name not in self.symbols:
            raise self.semantic(tok, f"undeclared name {name!r}")
        kind, stmt = self.symbols[name]
        if kind not in kinds:
            raise ModelError(
                f"{name!r} is a {kind}, expected {' or '.join(kinds)}",
                tok.line,
                tok.col,
                "semantic",
                related=stmt.line,
            )
        return name

    # polynomials
    def _poly_tokens(self):
        out = []
        for t in self.toks:
            kind = t.kind if t.kind in ("int", "var", "op") else "other"
            out.append((kind, t.value, t.offset))
        return out

    def poly(self, term_only=False):
        self._need_chart(self.peek())
        parser = _PolyParser(self.text, self.nvars, self._ptoks, self.i)
        start = self.peek()
        try:
            p = parser.parse_term() if term_only else parser.parse_sum()
        except PolySyntaxError as exc:
            tok = self._token_at(exc.pos)
            message = str(exc).rsplit(" at column ", 1)[0]
            if "outside chart" in message:
                raise ModelError(message, tok.line, tok.col, "semantic") from None
            raise self.error(tok, message, ["polynomial"]) from None
        if parser.i == self.i:
            raise self.error(start, "expected a polynomial", ["polynomial"])
        self.i = parser.i
        return p

    def _token_at(self, offset):
        for t in self.toks:
            if t.offset >= offset:
                return t
        return self.toks[-1]

    def _need_chart(self, tok):
        if self.nvars is None:
            raise self.semantic(tok, "a chart declaration must come first")

    # statements
    def parse(self):
        self._ptoks = self._poly_tokens()
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind == "newline":
                self.take()
                self.statements.append(Blank(tok.line, tok.col))
                continue
            if tok.kind == "comment":
                self.take()
                self.statements.append(Comment(tok.line, tok.col, comment=tok.value))
                if self.peek().kind == "newline":
                    self.take()
                continue
            if tok.kind != "ident" or tok.value not in KEYWORDS:
                raise self.error(tok, "expected a statement", KEYWORDS)
            stmt = getattr(self, f"_{tok.value}")()
            self.statements.append(self.end_of_statement(stmt))
        return ModelDoc(self.statements, self.nvars, self.symbols)

    def _chart(self):
        tok = self.take()
        if self.nvars is not None:
            raise self.semantic(tok, "the chart is already declared")
        ntok = self.peek()
        n = self.expect_int("chart dimension")
        if n < 1:
            raise self.semantic(ntok, "chart dimension must be positive")
        self.nvars = n
        return ChartDecl(tok.line, tok.col, n)

    def _bundle(self):
        tok = self.take()
        self._need_chart(tok)
        name = self.expect_name("bundle name")
        self.expect("ident", "rank")
        rank = self.expect_int("rank")
        stmt = BundleDecl(tok.line, tok.col, name.value, rank)
        self.declare(name, name.value, "bundle", stmt)
        return stmt

    def _poly(self):
        tok = self.take()
        self._need_chart(tok)
        name = self.expect_name("poly name")
        self.expect("op", "=")
        stmt = PolyDecl(tok.line, tok.col, name.value, self.poly())
        self.declare(name, name.value, "poly", stmt)
        return stmt

    def _form(self):
        tok = self.take()
        self._need_chart(tok)
        name = self.expect_name("form name")
        self.expect("op", "=")
        stmt = FormDecl(tok.line, tok.col, name.value, self.form_literal())
        self.declare(name, name.value, "form", stmt)
        return stmt

    def form_literal(self):
        n = self.nvars
        coeffs = {}
        degree = None
        sign = 1
        first = True
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.value in "+-":
                self.take()
                sign = -1 if tok.value == "-" else 1
            elif not first:
                break
            first = False
            start = self.peek()
            if start.kind == "ident" and _is_dtoken(start.value):
                coef = Poly.const(n, 1)
            else:
                coef = self.poly(term_only=True)
                self.expect("op", "*", what="'*d'")
                if not (self.peek().kind == "ident" and _is_dtoken(self.peek().value)):
                    raise self.error(self.peek(), "expected a differential like d1,2", ["'d' index list"])
            dtok = self.take()
            idx = [int(dtok.value[1:])]
            while self.peek().kind == "op" and self.peek().value == ",":
                self.take()
                idx.append(self.expect_int("form index"))
            for j in idx:
                if not 1 <= j <= n:
                    raise self.semantic(dtok, f"form index {j} outside 1..{n}")
            if degree is None:
                degree = len(idx)
            elif degree != len(idx):
                raise self.semantic(dtok, f"form mixes degrees {degree} and {len(idx)}")
            s, key = _sort_sign([j - 1 for j in idx])
            if s == 0:
                sign = 1
                continue
            term = coef.scale(sign * s)
            old = coeffs.get(key)
            total = term if old is None else old + term
            if total:
                coeffs[key] = total
            else:
                coeffs.pop(key, None)
            sign = 1
        return Form(n, degree, coeffs)

    def _tensor(self):
        tok = self.take()
        self._need_chart(tok)
        name = self.expect_name("tensor name")
        self.expect("op", "[")
        shape = [self.expect_int("dimension")]
        while self.peek().kind == "op" and self.peek().value == ",":
            self.take()
            shape.append(self.expect_int("dimension"))
        self.expect("op", "]")
        self.expect("op", "{")
        entries = {}
        while not (self.peek().kind == "op" and self.peek().value == "}"):
            etok = self.expect("op", "(", what="'(' or '}'")
            idx = [self.expect_int("index")]
            while self.peek().kind == "op" and self.peek().value == ",":
                self.take()
                idx.append(self.expect_int("index"))
            self.expect("op", ")")
            self.expect("op", ":")
            if len(idx) != len(shape):
                raise self.semantic(etok, f"index {tuple(idx)} does not match shape {tuple(shape)}")
            for j, s in zip(idx, shape):
                if not 1 <= j <= s:
                    raise self.semantic(etok, f"index {tuple(idx)} outside shape {tuple(shape)}")
            key = tuple(j - 1 for j in idx)
            if key in entries:
                raise self.semantic(etok, f"duplicate entry {tuple(idx)}")
            vtok = self.peek()
            if vtok.kind == "ident":
                value = self.resolve(self.take(), ("poly",))
            else:
                value = self.poly()
            if not (isinstance(value, Poly) and not value):
                entries[key] = value
            nxt = self.peek()
            if nxt.kind == "op" and nxt.value == ";":
                self.take()
            elif not (nxt.kind == "op" and nxt.value == "}"):
                raise self.error(nxt, "expected ';' or '}'", ["';'", "'}'"])
        self.take()
        stmt = TensorDecl(tok.line, tok.col, name.value, tuple(shape), entries)
        self.declare(name, name.value, "tensor", stmt)
        return stmt

    def _base(self):
        tok = self.take()
        self._need_chart(tok)
        name = self.expect_name("base name")
        self.expect("ident", "rank")
        rank = self.expect_int("rank")
        self.expect("ident", "anchor")
        anchor = self.resolve(self.expect_name("anchor tensor"), ("tensor",))
        structure = None
        if self.peek().kind == "ident" and self.peek().value == "structure":
            self.take()
            structure = self.resolve(self.expect_name("structure tensor"), ("tensor",))
        stmt = BaseDecl(tok.line, tok.col, name.value, rank, anchor, structure)
        self.declare(name, name.value, "base", stmt)
        return stmt

    def _builtin_decl(self):
        tok = self.take()
        self._need_chart(tok)
        kind = tok.value
        name = self.expect_name(f"{kind} name")
        self.expect("op", "=")
        btok = self.peek()
        allowed = sorted(b for b, entry in BUILTINS.items() if entry[0] == kind)
        if btok.kind != "ident" or btok.value not in BUILTINS:
            raise self.error(btok, f"expected a {kind} builtin", allowed)
        if BUILTINS[btok.value][0] != kind:
            raise ModelError(
                f"builtin {btok.value!r} does not produce a {kind}", btok.line, btok.col, "semantic", expected=allowed
            )
        self.take()
        _, argspec, required = BUILTINS[btok.value]
        args = []
        seen = set()
        while self.peek().kind == "ident":
            ktok = self.take()
            if ktok.value not in argspec:
                raise ModelError(
                    f"{btok.value} takes no argument {ktok.value!r}", ktok.line, ktok.col, "semantic", expected=argspec
                )
            if ktok.value in seen:
                raise self.semantic(ktok, f"argument {ktok.value!r} given twice")
            seen.add(ktok.value)
            self.expect("op", "=")
            vtok = self.peek()
            kinds = argspec[ktok.value]
            if vtok.kind == "int" and "int" in kinds:
                value = int(self.take().value)
            elif vtok.kind == "ident":
                value = self.resolve(self.take(), tuple(k for k in kinds if k != "int"))
            else:
                raise self.error(vtok, f"expected a value for {ktok.value}", kinds)
            args.append((ktok.value, value))
        missing = [r for r in required if r not in seen]
        if missing:
            raise self.error(self.peek(), f"{btok.value} needs {', '.join(missing)}", [f"{m}=" for m in missing])
        if btok.value == "twist" and ("form" in seen) == ("h" in seen):
            raise self.semantic(btok, "twist needs exactly one of form= or h=")
        stmt = BuiltinDecl(tok.line, tok.col, kind, name.value, btok.value, tuple(args))
        self.declare(name, name.value, kind, stmt)
        return stmt

    _bracket = _precalc = _twistdata = _builtin_decl

    def _check(self):
        tok = self.take()
        self._need_chart(tok)
        atok = self.peek()
        if atok.kind != "ident" or atok.value not in AXIOMS:
            raise self.error(atok, "expected an axiom name", AXIOMS)
        self.take()
        target = self.resolve(self.expect_name("check target"), (AXIOMS[atok.value],))
        options = {}
        alias = None
        while self.peek().kind == "ident":
            otok = self.take()
            if otok.value == "as":
                alias_tok = self.expect_name("check name")
                self.declare(alias_tok, alias_tok.value, "check", None)
                alias = alias_tok.value
                break
            if otok.value not in CHECK_OPTIONS:
                raise self.error(otok, "unknown check option", CHECK_OPTIONS + ("as",))
            if otok.value in options:
                raise self.semantic(otok, f"option {otok.value!r} given twice")
            self.expect("op", "=")
            options[otok.value] = self.expect_int(otok.value)
        stmt = CheckDirective(tok.line, tok.col, atok.value, target, options, alias)
        if alias:
            self.symbols[alias] = ("check", stmt)
        return stmt


def _is_dtoken(value):
    return len(value) > 1 and value[0] == "d" and value[1:].isdigit()


def parse_model(text):
    """Parse and resolve a document; raises ModelError with a location on failure."""
    if not isinstance(text, str):
        text = text.decode("utf-8")
    return _Parser(text).parse()


def format_model(doc):
    """Canonical text: one statement per line, runs of blank lines collapsed."""
    lines = []
    for stmt in doc.statements:
        if isinstance(stmt, Blank):
            if lines and lines[-1] != "":
                lines.append("")
            continue
        lines.append(stmt.render())
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines) + "\n" if lines else ""
