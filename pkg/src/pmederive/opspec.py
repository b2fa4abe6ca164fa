"""The ``.clk`` operation-description format.

::

    operation LU {
      operand L : m x m [Output, LowerTriangular, UnitDiagonal];
      operand U : m x m [Output, UpperTriangular];
      operand A : m x m [Input, ExistsLU];
      postcondition {
        L U = A;
      }
    }

Products are written by juxtaposition or ``*``; ``-``, ``+``, ``^T`` and
``^-1`` are the remaining operators.  A vector is declared with a single size
(``: m``), a scalar with no size at all.  Outputs are marked by the ``Output``
property; the postcondition is written in implicit form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .expr import (
    UNIT,
    ZERO,
    IDENTITY,
    DimensionError,
    Equation,
    Expr,
    Inverse,
    Neg,
    OpApply,
    Operand,
    Plus,
    Property,
    Ref,
    Size,
    Times,
    Transpose,
    close_properties,
    equation_text,
    infer_dims,
    normalize,
    normalize_equation,
    operands_of,
    property_violations,
    sorted_properties,
)

QUADRANT_NAMES = ("TL", "TR", "BL", "BR", "T", "B", "L", "R")

# diagnostic codes; one per rejected invariant
CODES = {
    "syntax": "E100",
    "unknown-property": "E101",
    "undeclared-operand": "E102",
    "dimension-mismatch": "E103",
    "empty-postcondition": "E104",
    "no-output": "E105",
    "no-input": "E106",
    "equation-without-output": "E107",
    "duplicate-operand": "E108",
    "input-output": "E109",
    "zero-identity": "E110",
    "non-square-structure": "E111",
    "shape-kind": "E112",
    "missing-dims": "E113",
}

# recognized names whose quadrant inheritance is not modeled
UNSUPPORTED_PROPERTIES = {
    "Symmetric": "partitioning would have to tie the off-diagonal quadrants together",
}


class SpecError(ValueError):
    def __init__(self, kind: str, message: str, line: int = 0, col: int = 0, filename: str = "<input>"):
        self.kind = kind
        self.code = CODES[kind]
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename
        super().__init__(self.diagnostic())

    def diagnostic(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}: {self.code}: {self.message}"


@dataclass(frozen=True)
class OperationSpec:
    name: str
    operands: tuple[Operand, ...]
    postcondition: tuple[Equation, ...]

    def operand(self, name: str) -> Operand:
        for op in self.operands:
            if op.name == name:
                return op
        raise KeyError(name)

    @property
    def outputs(self) -> tuple[Operand, ...]:
        return tuple(op for op in self.operands if op.is_output)

    @property
    def inputs(self) -> tuple[Operand, ...]:
        return tuple(op for op in self.operands if op.is_input)

    def dims(self, r: Ref) -> tuple[Size, Size]:
        op = self.operand(r.name)
        return op.rows, op.cols


# --------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<pow>\^(-1|T))
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<num>[0-9]+)
  | (?P<sym>[{}\[\]();:,=+\-*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecError("syntax", f"unexpected character {text[pos]!r}", line, pos - line_start + 1, filename)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str, filename: str, quadrants: bool = False, literals: bool = False):
        self.toks = tokenize(text, filename)
        self.i = 0
        self.filename = filename
        self.quadrants = quadrants
        self.literals = literals
        self.ref_positions: dict[Ref, Token] = {}

    # helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, kind: str, message: str, tok: Token | None = None) -> SpecError:
        tok = tok or self.tok
        return SpecError(kind, message, tok.line, tok.col, self.filename)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("sym", "ident")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error("syntax", f"expected {text!r}, found {shown!r}")
        return self.advance()

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            shown = self.tok.text or "end of input"
            raise self.error("syntax", f"expected identifier, found {shown!r}")
        return self.advance()

    # expressions
    def make_ref(self, tok: Token) -> Ref:
        name, quad = tok.text, None
        if self.quadrants:
            m = re.fullmatch(r"(.+?)_(TL|TR|BL|BR|T|B|L|R)", tok.text)
            if m:
                name, quad = m.group(1), m.group(2)
        r = Ref(name, quad)
        self.ref_positions.setdefault(r, tok)
        return r

    def starts_primary(self) -> bool:
        t = self.tok
        return t.kind == "ident" or (t.kind == "sym" and t.text == "(") or (self.literals and t.kind == "num")

    def sum(self) -> Expr:
        terms = [self.term()]
        while self.at("+") or self.at("-"):
            op = self.advance().text
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Plus(tuple(terms))

    def term(self) -> Expr:
        factors = [self.unary()]
        while True:
            if self.at("*"):
                self.advance()
                factors.append(self.unary())
            elif self.starts_primary():
                factors.append(self.unary())
            else:
                break
        return factors[0] if len(factors) == 1 else Times(tuple(factors))

    def unary(self) -> Expr:
        if self.at("-"):
            self.advance()
            return Neg(self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while self.tok.kind == "pow":
            e = Transpose(e) if self.advance().text == "^T" else Inverse(e)
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "sym" and t.text == "(":
            self.advance()
            e = self.sum()
            self.expect(")")
            return e
        if t.kind == "num" and self.literals:
            self.advance()
            if t.text == "0":
                return ZERO
            if t.text == "1":
                return IDENTITY
            raise self.error("syntax", f"unsupported literal {t.text!r}", t)
        if t.kind == "ident":
            self.advance()
            nxt = self.tok
            adjacent = nxt.line == t.line and nxt.col == t.col + len(t.text)
            if self.at("(") and adjacent and self.quadrants:
                self.advance()
                args = [self.sum()]
                while self.at(","):
                    self.advance()
                    args.append(self.sum())
                self.expect(")")
                return OpApply(t.text, tuple(args))
            if t.text == "I" and self.literals:
                return IDENTITY
            return self.make_ref(t)
        shown = t.text or "end of input"
        raise self.error("syntax", f"expected an operand or '(', found {shown!r}")

    def equation(self) -> Equation:
        if self.at("{"):
            self.advance()
            outs = [self.make_ref(self.ident())]
            while self.at(","):
                self.advance()
                outs.append(self.make_ref(self.ident()))
            self.expect("}")
            self.expect("=")
            rhs = self.sum()
            if isinstance(rhs, OpApply):
                rhs = OpApply(rhs.op, rhs.args, len(outs))
            return Equation(tuple(outs), rhs)
        lhs = self.sum()
        self.expect("=")
        return Equation((lhs,), self.sum())

    # spec
    def size(self) -> Size:
        return Size(self.ident().text)

    def operand(self) -> tuple[Operand, Token]:
        self.expect("operand")
        name_tok = self.ident()
        dims: tuple[Size, Size] | None = None
        if self.at(":"):
            self.advance()
            rows = self.size()
            cols = UNIT
            if self.at("x"):
                self.advance()
                cols = self.size()
            dims = (rows, cols)
        props: list[Property] = []
        if self.at("["):
            self.advance()
            while not self.at("]"):
                ptok = self.ident()
                try:
                    props.append(Property(ptok.text))
                except ValueError:
                    if ptok.text in UNSUPPORTED_PROPERTIES:
                        msg = f"property {ptok.text!r} is not supported: {UNSUPPORTED_PROPERTIES[ptok.text]}"
                    else:
                        msg = f"unknown property {ptok.text!r}"
                    raise self.error("unknown-property", msg, ptok) from None
                if not self.at("]"):
                    self.expect(",")
            self.advance()
        self.expect(";")
        closed = close_properties(props)
        if dims is None:
            if Property.SCALAR not in closed:
                raise self.error("missing-dims", f"operand {name_tok.text!r} needs a size", name_tok)
            dims = (UNIT, UNIT)
        elif Property.SCALAR in closed and dims != (UNIT, UNIT):
            raise self.error("shape-kind", f"scalar {name_tok.text!r} cannot have a size", name_tok)
        if Property.VECTOR in closed and dims[1] != UNIT:
            raise self.error("shape-kind", f"vector {name_tok.text!r} takes a single size", name_tok)
        for code, msg in property_violations(closed, *dims):
            raise self.error(code, f"{name_tok.text}: {msg}", name_tok)
        return Operand(name_tok.text, closed, dims[0], dims[1]), name_tok

    def spec(self) -> OperationSpec:
        head = self.expect("operation")
        name = self.ident().text
        self.expect("{")
        operands: list[Operand] = []
        seen: dict[str, Token] = {}
        equations: list[tuple[Equation, Token]] = []
        post_tok = None
        while not self.at("}"):
            if self.at("operand"):
                op, tok = self.operand()
                if op.name in seen:
                    raise self.error("duplicate-operand", f"operand {op.name!r} declared twice", tok)
                seen[op.name] = tok
                operands.append(op)
            elif self.at("postcondition"):
                post_tok = self.advance()
                self.expect("{")
                while not self.at("}"):
                    start = self.tok
                    equations.append((self.equation(), start))
                    self.expect(";")
                self.advance()
            else:
                shown = self.tok.text or "end of input"
                raise self.error("syntax", f"expected 'operand' or 'postcondition', found {shown!r}")
        self.advance()
        if self.tok.kind != "eof":
            raise self.error("syntax", f"trailing input {self.tok.text!r}")
        return _validate(name, operands, equations, head, post_tok, self)


def _validate(name, operands, equations, head, post_tok, parser: _Parser) -> OperationSpec:
    by_name = {op.name: op for op in operands}
    if not any(op.is_output for op in operands):
        raise parser.error("no-output", "no operand is marked Output", head)
    if not any(op.is_input for op in operands):
        raise parser.error("no-input", "no operand is marked Input", head)
    if not equations:
        raise parser.error("empty-postcondition", "postcondition is empty", post_tok or head)
    for eq, tok in equations:
        for r in operands_of(eq):
            if r.name not in by_name:
                raise parser.error("undeclared-operand", f"undeclared operand {r.name!r}", parser.ref_positions.get(r, tok))
    dims = lambda r: (by_name[r.name].rows, by_name[r.name].cols)  # noqa: E731
    normalized = []
    for eq, tok in equations:
        try:
            left = infer_dims(eq.lhs[0], dims)
            right = infer_dims(eq.rhs, dims)
        except DimensionError as exc:
            raise parser.error("dimension-mismatch", str(exc), tok) from None
        if left is not None and right is not None and left != right:
            raise parser.error(
                "dimension-mismatch",
                f"sides have dimensions {left[0]}x{left[1]} and {right[0]}x{right[1]}",
                tok,
            )
        if not any(by_name[r.name].is_output for r in operands_of(eq)):
            raise parser.error("equation-without-output", "equation references no Output operand", tok)
        normalized.append(normalize_equation(eq))
    return OperationSpec(name, tuple(operands), tuple(normalized))


def parse_spec(text: str, filename: str = "<input>") -> OperationSpec:
    """Parse and validate a ``.clk`` description; raises :class:`SpecError`."""
    return _Parser(text, filename).spec()


def load_spec(path) -> OperationSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), str(path))


def parse_expr(text: str, quadrants: bool = True) -> Expr:
    """Parse a standalone expression such as ``"A_BR - L_BL U_TR"``.

    With ``quadrants`` a ``_TL``/``_T``/... suffix denotes a quadrant ref and
    ``Name(args)`` an operation application.  ``0`` and ``I`` are literals.
    """
    p = _Parser(text, "<expr>", quadrants=quadrants, literals=True)
    e = p.sum()
    if p.tok.kind != "eof":
        raise p.error("syntax", f"trailing input {p.tok.text!r}")
    return normalize(e)


def parse_equation(text: str, quadrants: bool = True) -> Equation:
    """Parse ``"{L_TL, U_TL} = LU(A_TL)"`` or ``"L_TL U_TR = A_TR"``."""
    p = _Parser(text, "<expr>", quadrants=quadrants, literals=True)
    eq = p.equation()
    if p.tok.kind != "eof":
        raise p.error("syntax", f"trailing input {p.tok.text!r}")
    return normalize_equation(eq)


def _size_text(op: Operand) -> str:
    if op.kind is Property.SCALAR:
        return ""
    if op.kind is Property.VECTOR:
        return f" : {op.rows}"
    return f" : {op.rows} x {op.cols}"


def render_spec(spec: OperationSpec) -> str:
    lines = [f"operation {spec.name} {{"]
    for op in spec.operands:
        props = ", ".join(p.value for p in sorted_properties(op.properties))
        lines.append(f"  operand {op.name}{_size_text(op)} [{props}];")
    lines.append("  postcondition {")
    for eq in spec.postcondition:
        lines.append(f"    {equation_text(eq)};")
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"

