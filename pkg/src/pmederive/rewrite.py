"""Block-matrix arithmetic and rewriting at the traversal boundaries."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .expr import (
    ZERO,
    Block,
    Equation,
    Expr,
    IdentityMatrix,
    Inverse,
    Neg,
    OpApply,
    Plus,
    Ref,
    Size,
    Times,
    Transpose,
    ZeroMatrix,
    normalize,
)
from .opspec import OperationSpec
from .partition import GRID, QUADRANTS, SHAPE_OF_GRID, RuleSet, quadrant_dims


class BlockError(ValueError):
    """Non-conformal block arithmetic (cannot happen for admissible rule sets)."""


@dataclass(frozen=True)
class QuadrantGrid:
    shape: tuple[int, int]
    cells: tuple[tuple[str | None, tuple[Equation, ...]], ...]

    @property
    def quadrants(self) -> tuple[str | None, ...]:
        return tuple(q for q, _ in self.cells)

    def __getitem__(self, quadrant: str | None) -> tuple[Equation, ...]:
        for q, eqs in self.cells:
            if q == quadrant:
                return eqs
        raise KeyError(quadrant)

    def equations(self) -> list[Equation]:
        return [eq for _, eqs in self.cells for eq in eqs]


def grid_quadrants(nr: int, nc: int) -> tuple[str | None, ...]:
    return QUADRANTS[SHAPE_OF_GRID[(nr, nc)]]


# --------------------------------------------------------------------------
# block arithmetic


def _blocks(e: Expr) -> tuple[int, int, list[Expr]]:
    if isinstance(e, Block):
        return e.nrows, e.ncols, list(e.cells)
    if isinstance(e, (Ref, ZeroMatrix, IdentityMatrix, OpApply)):
        return 1, 1, [e]
    if isinstance(e, Neg):
        r, c, cells = _blocks(e.arg)
        return r, c, [Neg(x) for x in cells]
    if isinstance(e, Transpose):
        r, c, cells = _blocks(e.arg)
        return c, r, [Transpose(cells[i * c + j]) for j in range(c) for i in range(r)]
    if isinstance(e, Inverse):
        r, c, cells = _blocks(e.arg)
        if (r, c) != (1, 1):
            raise BlockError(f"inverse of a partitioned operand is not supported: {e}")
        return 1, 1, [Inverse(cells[0])]
    if isinstance(e, Plus):
        parts = [_blocks(t) for t in e.terms]
        r, c = parts[0][0], parts[0][1]
        if any((p[0], p[1]) != (r, c) for p in parts):
            raise BlockError(f"non-conformal block sum: {e}")
        return r, c, [Plus(tuple(p[2][k] for p in parts)) for k in range(r * c)]
    if isinstance(e, Times):
        r, c, acc = _blocks(e.factors[0])
        for f in e.factors[1:]:
            r2, c2, cells = _blocks(f)
            if c != r2:
                raise BlockError(f"non-conformal block product: {e}")
            acc = [
                Plus(tuple(Times((acc[i * c + k], cells[k * c2 + j])) for k in range(c)))
                for i in range(r)
                for j in range(c2)
            ]
            c = c2
        return r, c, acc
    raise BlockError(f"cannot distribute over {e!r}")


def distribute(partitioned: Sequence[Equation]) -> QuadrantGrid:
    """Multiply out the block form and distribute ``=`` over the quadrants.

    Equations of a multi-equation postcondition are grouped per quadrant, in
    postcondition order.  Equalities that vanish (``0 = 0``) are dropped.
    """
    shape = None
    per_cell: dict[int, list[Equation]] = {}
    for eq in partitioned:
        lr, lc, lcells = _blocks(eq.lhs[0])
        rr, rc, rcells = _blocks(eq.rhs)
        if (lr, lc) != (rr, rc):
            raise BlockError(f"sides of {eq} have block shapes {lr}x{lc} and {rr}x{rc}")
        if shape is None:
            shape = (lr, lc)
        elif shape != (lr, lc):
            raise BlockError("equations of one system must share a block shape")
        for k, (a, b) in enumerate(zip(lcells, rcells)):
            a, b = normalize(a), normalize(b)
            if normalize(Plus((a, Neg(b)))) == ZERO:
                continue
            per_cell.setdefault(k, []).append(Equation((a,), b))
    assert shape is not None
    names = grid_quadrants(*shape)
    return QuadrantGrid(shape, tuple((names[k], tuple(per_cell.get(k, ()))) for k in range(len(names))))


# --------------------------------------------------------------------------
# boundaries


class Boundary(str, Enum):
    INITIAL = "Initial"
    FINAL = "Final"

    def __str__(self) -> str:
        return self.value


def boundary_size(s: Size, boundary: Boundary) -> Size:
    if s.part in ("full", "zero"):
        return s
    grows = s.part == "head"
    full = grows == (boundary is Boundary.FINAL)
    return Size(s.base) if full else Size(s.base, "zero")


class _Rewriter:
    def __init__(self, spec: OperationSpec, rs: RuleSet, boundary: Boundary):
        self.spec, self.rs, self.boundary = spec, rs, boundary

    def dims(self, r: Ref) -> tuple[Size, Size]:
        rows, cols = quadrant_dims(self.spec, self.rs, r)
        return boundary_size(rows, self.boundary), boundary_size(cols, self.boundary)

    def empty(self, r: Ref) -> bool:
        return any(s.is_zero for s in self.dims(r))

    def expr(self, e: Expr) -> Expr:
        if isinstance(e, Ref):
            return ZERO if self.empty(e) else Ref(e.name)
        if isinstance(e, (ZeroMatrix, IdentityMatrix)):
            return e
        if isinstance(e, Plus):
            return Plus(tuple(self.expr(t) for t in e.terms))
        if isinstance(e, Times):
            return Times(tuple(self.expr(f) for f in e.factors))
        if isinstance(e, Neg):
            return Neg(self.expr(e.arg))
        if isinstance(e, Transpose):
            return Transpose(self.expr(e.arg))
        if isinstance(e, Inverse):
            inner = self.expr(e.arg)
            # the inverse of an empty block is empty
            return ZERO if inner == ZERO else Inverse(inner)
        if isinstance(e, OpApply):
            return OpApply(e.op, tuple(self.expr(a) for a in e.args), e.n_outputs)
        raise TypeError(f"unexpected node {e!r}")

    def equation(self, eq: Equation) -> Equation | None:
        if any(isinstance(x, Ref) and self.empty(x) for x in eq.lhs):
            return None
        lhs = tuple(normalize(self.expr(x)) for x in eq.lhs)
        rhs = normalize(self.expr(eq.rhs))
        if len(lhs) == 1 and lhs[0] == rhs:
            return None
        return Equation(lhs, rhs)


def boundary_rewrite(
    predicate: Mapping[str | None, Sequence[Equation]] | Iterable[Equation],
    boundary: Boundary,
    spec: OperationSpec,
    rs: RuleSet,
) -> list[Equation]:
    """Rewrite a predicate for the initial (anchor empty) or final (anchor full) partitioning.

    Equalities over empty outputs and tautologies vanish; products through an
    empty dimension become zero; surviving quadrants are renamed to the whole
    operands.  The result lists the residual obligations.
    """
    if isinstance(predicate, Mapping):
        eqs = [eq for q in predicate for eq in predicate[q]]
    else:
        eqs = list(predicate)
    rw = _Rewriter(spec, rs, Boundary(boundary))
    out = []
    for eq in eqs:
        r = rw.equation(eq)
        if r is not None:
            out.append(r)
    return out


__all__ = [
    "Boundary",
    "BlockError",
    "QuadrantGrid",
    "boundary_rewrite",
    "boundary_size",
    "distribute",
    "grid_quadrants",
    "GRID",
]
