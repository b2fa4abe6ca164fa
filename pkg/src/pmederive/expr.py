"""Immutable symbolic matrix expressions.

Expressions are trees of frozen dataclasses.  The raw constructors do no
simplification; :func:`normalize` maps any tree onto its canonical form:

* ``Plus`` and ``Times`` are flattened and never have fewer than two children;
* ``Times`` keeps operand order (the product is not commutative);
* ``Plus`` children are sorted by their s-expression serialization, literal
  zeros are dropped and ``x + (-x)`` pairs cancel;
* products are distributed over sums, signs are pulled out of products;
* ``Inverse`` is never expanded, only ``inv(inv(x)) -> x`` and
  ``x inv(x) -> I`` are applied.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, Mapping, Sequence


class Property(str, Enum):
    INPUT = "Input"
    OUTPUT = "Output"
    MATRIX = "Matrix"
    VECTOR = "Vector"
    SCALAR = "Scalar"
    LOWER_TRIANGULAR = "LowerTriangular"
    UPPER_TRIANGULAR = "UpperTriangular"
    UNIT_DIAGONAL = "UnitDiagonal"
    NONSINGULAR = "NonSingular"
    EXISTS_LU = "ExistsLU"
    ZERO = "Zero"
    IDENTITY = "Identity"

    def __str__(self) -> str:
        return self.value


PROPERTY_ORDER = {p: i for i, p in enumerate(Property)}
TRIANGULAR = frozenset({Property.LOWER_TRIANGULAR, Property.UPPER_TRIANGULAR})
SHAPE_KINDS = frozenset({Property.MATRIX, Property.VECTOR, Property.SCALAR})


def close_properties(props: Iterable[Property]) -> frozenset[Property]:
    """Add the implied properties (unit diagonal => nonsingular, default Matrix)."""
    props = set(props)
    if Property.UNIT_DIAGONAL in props:
        props.add(Property.NONSINGULAR)
    if not props & SHAPE_KINDS:
        props.add(Property.MATRIX)
    return frozenset(props)


def sorted_properties(props: Iterable[Property]) -> list[Property]:
    return sorted(props, key=PROPERTY_ORDER.__getitem__)


@dataclass(frozen=True, order=True)
class Size:
    """A symbolic dimension.

    ``part`` is ``"full"`` for an unsplit dimension; a split of ``base`` by the
    split variable ``split`` yields a ``"head"`` (top/left, size k) and a
    ``"tail"`` (bottom/right, size base - k) part.  Boundary rewriting turns
    parts into ``"zero"`` or ``"full"``.
    """

    base: str
    part: str = "full"
    split: int | None = None

    @property
    def is_zero(self) -> bool:
        return self.part == "zero"

    def __str__(self) -> str:
        if self.part == "full":
            return self.base
        if self.part == "zero":
            return "0"
        k = f"k{self.split}"
        return k if self.part == "head" else f"{self.base}-{k}"


UNIT = Size("1")


@dataclass(frozen=True)
class Operand:
    name: str
    properties: frozenset[Property]
    rows: Size
    cols: Size

    def has(self, prop: Property) -> bool:
        return prop in self.properties

    @property
    def is_output(self) -> bool:
        return Property.OUTPUT in self.properties

    @property
    def is_input(self) -> bool:
        return Property.INPUT in self.properties

    @property
    def kind(self) -> Property:
        for p in (Property.SCALAR, Property.VECTOR):
            if p in self.properties:
                return p
        return Property.MATRIX


def property_violations(props: frozenset[Property], rows: Size, cols: Size) -> list[tuple[str, str]]:
    """Return ``(code, message)`` pairs for every violated operand invariant."""
    out = []
    if Property.INPUT in props and Property.OUTPUT in props:
        out.append(("input-output", "operand cannot be both Input and Output"))
    if Property.ZERO in props and Property.IDENTITY in props:
        out.append(("zero-identity", "Zero and Identity are mutually exclusive"))
    if props & (TRIANGULAR | {Property.UNIT_DIAGONAL}) and rows != cols:
        out.append(("non-square-structure", "triangular/unit-diagonal operand must be square"))
    if len(props & SHAPE_KINDS) > 1:
        out.append(("shape-kind", "at most one of Matrix, Vector, Scalar"))
    return out


# --------------------------------------------------------------------------
# expression nodes


class DimensionError(ValueError):
    def __init__(self, message: str, subterm: "Expr"):
        super().__init__(f"{message}: {sexpr(subterm)}")
        self.subterm = subterm


class Expr:
    __slots__ = ()

    def __add__(self, other: "Expr") -> "Expr":
        return normalize(Plus((self, other)))

    def __sub__(self, other: "Expr") -> "Expr":
        return normalize(Plus((self, Neg(other))))

    def __mul__(self, other: "Expr") -> "Expr":
        return normalize(Times((self, other)))

    def __neg__(self) -> "Expr":
        return normalize(Neg(self))

    @property
    def T(self) -> "Expr":
        return normalize(Transpose(self))

    @property
    def I(self) -> "Expr":  # noqa: E743
        return normalize(Inverse(self))

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Ref(Expr):
    name: str
    quadrant: str | None = None

    def whole(self) -> "Ref":
        return Ref(self.name)


@dataclass(frozen=True)
class ZeroMatrix(Expr):
    pass


@dataclass(frozen=True)
class IdentityMatrix(Expr):
    pass


ZERO = ZeroMatrix()
IDENTITY = IdentityMatrix()


@dataclass(frozen=True)
class Plus(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Times(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Transpose(Expr):
    arg: Expr


@dataclass(frozen=True)
class Inverse(Expr):
    arg: Expr


@dataclass(frozen=True)
class OpApply(Expr):
    """Application of a named operation; ``n_outputs`` is the output arity."""

    op: str
    args: tuple[Expr, ...]
    n_outputs: int = 1


@dataclass(frozen=True)
class Block(Expr):
    """A partitioned operand: ``nrows x ncols`` grid of blocks, row-major."""

    nrows: int
    ncols: int
    cells: tuple[Expr, ...]

    def cell(self, i: int, j: int) -> Expr:
        return self.cells[i * self.ncols + j]


@dataclass(frozen=True)
class Equation:
    """``lhs = rhs``.

    ``lhs`` is a tuple: a single expression for implicit equations such as
    ``L U = A``, or one or more refs for solved forms like ``{L, U} = LU(A)``.
    """

    lhs: tuple[Expr, ...]
    rhs: Expr

    def __post_init__(self):
        if not isinstance(self.lhs, tuple):
            object.__setattr__(self, "lhs", (self.lhs,))

    @property
    def targets(self) -> tuple[Ref, ...]:
        return tuple(x for x in self.lhs if isinstance(x, Ref))

    @property
    def is_solved(self) -> bool:
        return all(isinstance(x, Ref) for x in self.lhs)

    def __str__(self) -> str:
        return equation_text(self)


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Plus):
        return e.terms
    if isinstance(e, Times):
        return e.factors
    if isinstance(e, (Neg, Transpose, Inverse)):
        return (e.arg,)
    if isinstance(e, OpApply):
        return e.args
    if isinstance(e, Block):
        return e.cells
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)


# --------------------------------------------------------------------------
# serialization


def sexpr(e: Expr) -> str:
    """Stable s-expression serialization used for ordering, hashing and goldens."""
    if isinstance(e, Ref):
        return e.name if e.quadrant is None else f"{e.name}[{e.quadrant}]"
    if isinstance(e, ZeroMatrix):
        return "0"
    if isinstance(e, IdentityMatrix):
        return "I"
    if isinstance(e, Plus):
        return "(+ " + " ".join(map(sexpr, e.terms)) + ")"
    if isinstance(e, Times):
        return "(* " + " ".join(map(sexpr, e.factors)) + ")"
    if isinstance(e, Neg):
        return f"(- {sexpr(e.arg)})"
    if isinstance(e, Transpose):
        return f"(T {sexpr(e.arg)})"
    if isinstance(e, Inverse):
        return f"(inv {sexpr(e.arg)})"
    if isinstance(e, OpApply):
        inner = " ".join(map(sexpr, e.args))
        return f"({e.op}:{e.n_outputs} {inner})"
    if isinstance(e, Block):
        inner = " ".join(map(sexpr, e.cells))
        return f"(block {e.nrows}x{e.ncols} {inner})"
    raise TypeError(f"not an expression: {e!r}")


def equation_sexpr(eq: Equation) -> str:
    lhs = " ".join(map(sexpr, eq.lhs))
    return f"(= ({lhs}) {sexpr(eq.rhs)})"


def ref_text(r: Ref) -> str:
    return r.name if r.quadrant is None else f"{r.name}_{r.quadrant}"


def _factor_text(e: Expr) -> str:
    s = to_text(e)
    return f"({s})" if isinstance(e, (Plus, Neg)) else s


def _postfix_text(e: Expr) -> str:
    s = to_text(e)
    return s if isinstance(e, (Ref, OpApply, ZeroMatrix, IdentityMatrix)) else f"({s})"


def _split_signs(terms: Sequence[Expr]) -> tuple[list[Expr], list[Expr]]:
    pos = [t for t in terms if not isinstance(t, Neg)]
    neg = [t.arg for t in terms if isinstance(t, Neg)]
    return pos, neg


def to_text(e: Expr) -> str:
    """Human-readable infix form (parseable by :func:`pmederive.opspec.parse_expr`)."""
    if isinstance(e, Ref):
        return ref_text(e)
    if isinstance(e, ZeroMatrix):
        return "0"
    if isinstance(e, IdentityMatrix):
        return "I"
    if isinstance(e, Plus):
        pos, neg = _split_signs(e.terms)
        parts = [_factor_text(t) if isinstance(t, Plus) else to_text(t) for t in pos]
        out = " + ".join(parts)
        for t in neg:
            out = f"{out} - {_factor_text(t)}" if out else f"-{_factor_text(t)}"
        return out
    if isinstance(e, Times):
        return " ".join(_factor_text(f) for f in e.factors)
    if isinstance(e, Neg):
        return f"-{_factor_text(e.arg)}"
    if isinstance(e, Transpose):
        return f"{_postfix_text(e.arg)}^T"
    if isinstance(e, Inverse):
        return f"{_postfix_text(e.arg)}^-1"
    if isinstance(e, OpApply):
        return f"{e.op}(" + ", ".join(map(to_text, e.args)) + ")"
    if isinstance(e, Block):
        rows = ("; ".join(", ".join(to_text(e.cell(i, j)) for j in range(e.ncols)) for i in range(e.nrows)))
        return f"[{rows}]"
    raise TypeError(f"not an expression: {e!r}")


def equation_text(eq: Equation) -> str:
    if len(eq.lhs) == 1:
        lhs = to_text(eq.lhs[0])
    else:
        lhs = "{" + ", ".join(map(to_text, eq.lhs)) + "}"
    return f"{lhs} = {to_text(eq.rhs)}"


GREEK = {"Psi": r"\Psi", "Phi": r"\Phi", "Omega": r"\Omega", "Lambda": r"\Lambda", "Sigma": r"\Sigma"}


def to_latex(e: Expr) -> str:
    if isinstance(e, Ref):
        return e.name if e.quadrant is None else f"{e.name}_{{{e.quadrant}}}"
    if isinstance(e, ZeroMatrix):
        return "0"
    if isinstance(e, IdentityMatrix):
        return "I"
    if isinstance(e, Plus):
        pos, neg = _split_signs(e.terms)
        wrap = lambda t: f"({to_latex(t)})" if isinstance(t, (Plus, Neg)) else to_latex(t)  # noqa: E731
        out = " + ".join(wrap(t) for t in pos)
        for t in neg:
            out = f"{out} - {wrap(t)}" if out else f"-{wrap(t)}"
        return out
    if isinstance(e, Times):
        return " ".join(f"({to_latex(f)})" if isinstance(f, (Plus, Neg)) else to_latex(f) for f in e.factors)
    if isinstance(e, Neg):
        return f"-{to_latex(e.arg)}"
    if isinstance(e, (Transpose, Inverse)):
        inner = to_latex(e.arg)
        if not isinstance(e.arg, (Ref, OpApply)):
            inner = f"({inner})"
        return inner + ("^{T}" if isinstance(e, Transpose) else "^{-1}")
    if isinstance(e, OpApply):
        return GREEK.get(e.op, e.op) + "(" + ", ".join(map(to_latex, e.args)) + ")"
    if isinstance(e, Block):
        rows = r" \\ ".join(" & ".join(to_latex(e.cell(i, j)) for j in range(e.ncols)) for i in range(e.nrows))
        return r"\left(\begin{array}{" + "c" * e.ncols + "} " + rows + r" \end{array}\right)"
    raise TypeError(f"not an expression: {e!r}")


def equation_latex(eq: Equation) -> str:
    if len(eq.lhs) == 1:
        lhs = to_latex(eq.lhs[0])
    else:
        lhs = r"\{ " + ", ".join(map(to_latex, eq.lhs)) + r" \}"
    return f"{lhs} = {to_latex(eq.rhs)}"


# --------------------------------------------------------------------------
# dimensions

DimLookup = Callable[[Ref], "tuple[Size, Size]"]


def infer_dims(e: Expr, dims: DimLookup):
    """Return ``(rows, cols)`` of ``e`` or ``None`` when undetermined (bare 0/I).

    Raises :class:`DimensionError` naming the offending subterm.
    """
    if isinstance(e, Ref):
        return dims(e)
    if isinstance(e, (ZeroMatrix, IdentityMatrix)):
        return None
    if isinstance(e, Neg):
        return infer_dims(e.arg, dims)
    if isinstance(e, Transpose):
        d = infer_dims(e.arg, dims)
        return None if d is None else (d[1], d[0])
    if isinstance(e, Inverse):
        d = infer_dims(e.arg, dims)
        if d is not None and d[0] != d[1]:
            raise DimensionError("inverse of a non-square expression", e)
        return d
    if isinstance(e, Plus):
        found = None
        for t in e.terms:
            d = infer_dims(t, dims)
            if d is None:
                continue
            if found is not None and d != found:
                raise DimensionError("non-conformal sum", e)
            found = d
        return found
    if isinstance(e, Times):
        ds = [infer_dims(f, dims) for f in e.factors]
        known = [(i, d) for i, d in enumerate(ds) if d is not None]
        for (i, a), (j, b) in zip(known, known[1:]):
            # only adjacent factors, or factors separated by 0/I which are square
            if a[1] != b[0]:
                raise DimensionError("non-conformal product", e)
        if not known:
            return None
        return (known[0][1][0], known[-1][1][1])
    if isinstance(e, (OpApply, Block)):
        for a in children(e):
            infer_dims(a, dims)
        return None
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# normalization


def _negate(x: Expr) -> Expr:
    """Negate an already-normalized expression, keeping it normalized."""
    if isinstance(x, ZeroMatrix):
        return x
    if isinstance(x, Neg):
        return x.arg
    if isinstance(x, Plus):
        return _make_plus([_negate(t) for t in x.terms])
    return Neg(x)


def _make_plus(terms: Iterable[Expr]) -> Expr:
    """Combine normalized terms into a canonical sum."""
    flat: list[Expr] = []
    for t in terms:
        if isinstance(t, Plus):
            flat.extend(t.terms)
        elif not isinstance(t, ZeroMatrix):
            flat.append(t)
    net: Counter[Expr] = Counter()
    for t in flat:
        if isinstance(t, Neg):
            net[t.arg] -= 1
        else:
            net[t] += 1
    out: list[Expr] = []
    for core, n in net.items():
        out.extend([core if n > 0 else Neg(core)] * abs(n))
    out.sort(key=sexpr)
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Plus(tuple(out))


def _make_times(factors: Sequence[Expr]) -> Expr:
    """Combine normalized factors into a canonical product (may return a sum)."""
    sign = False
    flat: list[Expr] = []
    for f in factors:
        if isinstance(f, Neg):
            sign = not sign
            f = f.arg
        if isinstance(f, ZeroMatrix):
            return ZERO
        if isinstance(f, IdentityMatrix):
            continue
        if isinstance(f, Times):
            flat.extend(f.factors)
        else:
            flat.append(f)
    for i, f in enumerate(flat):
        if isinstance(f, Plus):
            head, tail = flat[:i], flat[i + 1:]
            expanded = [_make_times([*head, t, *tail]) for t in f.terms]
            s = _make_plus(expanded)
            return _negate(s) if sign else s
    # cancel adjacent x inv(x) / inv(x) x
    stack: list[Expr] = []
    for f in flat:
        if stack and (
            (isinstance(f, Inverse) and f.arg == stack[-1])
            or (isinstance(stack[-1], Inverse) and stack[-1].arg == f)
        ):
            stack.pop()
            continue
        stack.append(f)
    if not stack:
        result: Expr = IDENTITY
    elif len(stack) == 1:
        result = stack[0]
    else:
        result = Times(tuple(stack))
    return Neg(result) if sign and not isinstance(result, ZeroMatrix) else result


def _make_transpose(x: Expr) -> Expr:
    if isinstance(x, (ZeroMatrix, IdentityMatrix)):
        return x
    if isinstance(x, Transpose):
        return x.arg
    if isinstance(x, Neg):
        return _negate(_make_transpose(x.arg))
    if isinstance(x, Plus):
        return _make_plus([_make_transpose(t) for t in x.terms])
    if isinstance(x, Times):
        return _make_times([_make_transpose(f) for f in reversed(x.factors)])
    if isinstance(x, Inverse):
        return Inverse(_make_transpose(x.arg))
    return Transpose(x)


def _make_inverse(x: Expr, where: Expr) -> Expr:
    if isinstance(x, ZeroMatrix):
        raise DimensionError("inverse of zero", where)
    if isinstance(x, IdentityMatrix):
        return x
    if isinstance(x, Inverse):
        return x.arg
    if isinstance(x, Neg):
        return _negate(_make_inverse(x.arg, where))
    return Inverse(x)


def _norm(e: Expr) -> Expr:
    if isinstance(e, (Ref, ZeroMatrix, IdentityMatrix)):
        return e
    if isinstance(e, Plus):
        return _make_plus([_norm(t) for t in e.terms])
    if isinstance(e, Times):
        return _make_times([_norm(f) for f in e.factors])
    if isinstance(e, Neg):
        return _negate(_norm(e.arg))
    if isinstance(e, Transpose):
        return _make_transpose(_norm(e.arg))
    if isinstance(e, Inverse):
        return _make_inverse(_norm(e.arg), e)
    if isinstance(e, OpApply):
        return OpApply(e.op, tuple(_norm(a) for a in e.args), e.n_outputs)
    if isinstance(e, Block):
        return Block(e.nrows, e.ncols, tuple(_norm(c) for c in e.cells))
    raise TypeError(f"not an expression: {e!r}")


def normalize(e: Expr, dims: DimLookup | None = None) -> Expr:
    """Canonical form of ``e``.  With ``dims`` the input is dimension-checked first."""
    if dims is not None:
        infer_dims(e, dims)
    return _norm(e)


def normalize_equation(eq: Equation, dims: DimLookup | None = None) -> Equation:
    return Equation(tuple(normalize(x, dims) for x in eq.lhs), normalize(eq.rhs, dims))


def structural_equal(a: Expr, b: Expr) -> bool:
    """Equality modulo reordering of sums (inputs are normalized first)."""
    return _norm(a) == _norm(b)


def equation_residual(eq: Equation) -> Expr:
    """``lhs - rhs`` of a single-lhs equation, normalized."""
    if len(eq.lhs) != 1:
        raise ValueError("residual is only defined for single-lhs equations")
    return normalize(Plus((eq.lhs[0], Neg(eq.rhs))))


def equations_equivalent(a: Equation, b: Equation) -> bool:
    """Same equation up to moving terms across ``=`` and an overall sign."""
    if a.is_solved and b.is_solved and (len(a.lhs) > 1 or len(b.lhs) > 1):
        return a.lhs == b.lhs and structural_equal(a.rhs, b.rhs)
    ra, rb = equation_residual(a), equation_residual(b)
    return ra == rb or ra == _negate(rb)


def operands_of(e: Expr | Equation) -> frozenset[Ref]:
    if isinstance(e, Equation):
        out: set[Ref] = set()
        for x in (*e.lhs, e.rhs):
            out |= operands_of(x)
        return frozenset(out)
    return frozenset(x for x in walk(e) if isinstance(x, Ref))


def _subst(e: Expr, bindings: Mapping[Ref, Expr]) -> Expr:
    if isinstance(e, Ref):
        return bindings.get(e, e)
    if isinstance(e, Plus):
        return Plus(tuple(_subst(t, bindings) for t in e.terms))
    if isinstance(e, Times):
        return Times(tuple(_subst(f, bindings) for f in e.factors))
    if isinstance(e, Neg):
        return Neg(_subst(e.arg, bindings))
    if isinstance(e, Transpose):
        return Transpose(_subst(e.arg, bindings))
    if isinstance(e, Inverse):
        return Inverse(_subst(e.arg, bindings))
    if isinstance(e, OpApply):
        return OpApply(e.op, tuple(_subst(a, bindings) for a in e.args), e.n_outputs)
    if isinstance(e, Block):
        return Block(e.nrows, e.ncols, tuple(_subst(c, bindings) for c in e.cells))
    return e


def substitute(e: Expr, bindings: Mapping[Ref, Expr], dims: DimLookup | None = None) -> Expr:
    """Replace refs according to ``bindings`` and normalize the result."""
    return normalize(_subst(e, bindings), dims)


def substitute_equation(eq: Equation, bindings: Mapping[Ref, Expr]) -> Equation:
    return Equation(tuple(substitute(x, bindings) for x in eq.lhs), substitute(eq.rhs, bindings))


def terms_of(e: Expr) -> tuple[Expr, ...]:
    """Additive terms of a normalized expression."""
    if isinstance(e, ZeroMatrix):
        return ()
    if isinstance(e, Plus):
        return e.terms
    return (e,)


def ref(name: str, quadrant: str | None = None) -> Ref:
    return Ref(name, quadrant)

