"""Partitioning rules, admissible rule-set enumeration and their application.

Every partitioned dimension of an operand carries a split variable.  A rule
set is admissible when the split variables can be unified so that every sum,
product and equality of the postcondition is conformal (a split dimension can
only meet a split dimension, an unsplit one only an unsplit one).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .expr import (
    IDENTITY,
    TRIANGULAR,
    ZERO,
    Block,
    Equation,
    Expr,
    IdentityMatrix,
    Inverse,
    Neg,
    Operand,
    Plus,
    Property,
    Ref,
    Size,
    Times,
    Transpose,
    ZeroMatrix,
    substitute,
)
from .opspec import OperationSpec


class Shape(str, Enum):
    ONE_BY_ONE = "1x1"
    ONE_BY_TWO = "1x2"
    TWO_BY_ONE = "2x1"
    TWO_BY_TWO = "2x2"

    def __str__(self) -> str:
        return self.value


QUADRANTS = {
    Shape.ONE_BY_ONE: (None,),
    Shape.ONE_BY_TWO: ("L", "R"),
    Shape.TWO_BY_ONE: ("T", "B"),
    Shape.TWO_BY_TWO: ("TL", "TR", "BL", "BR"),
}
GRID = {Shape.ONE_BY_ONE: (1, 1), Shape.ONE_BY_TWO: (1, 2), Shape.TWO_BY_ONE: (2, 1), Shape.TWO_BY_TWO: (2, 2)}
SHAPE_OF_GRID = {v: k for k, v in GRID.items()}

# (row part, col part) of each quadrant: "head" = top/left, "tail" = bottom/right
QUADRANT_PARTS = {
    None: ("full", "full"),
    "T": ("head", "full"),
    "B": ("tail", "full"),
    "L": ("full", "head"),
    "R": ("full", "tail"),
    "TL": ("head", "head"),
    "TR": ("head", "tail"),
    "BL": ("tail", "head"),
    "BR": ("tail", "tail"),
}


def quadrant_label(q: str | None) -> str:
    return "Whole" if q is None else q


class Traversal(str, Enum):
    TL_TO_BR = "TLtoBR"
    T_TO_B = "TtoB"
    L_TO_R = "LtoR"
    NONE = "None"

    def __str__(self) -> str:
        return self.value


INHERITED = frozenset({Property.INPUT, Property.OUTPUT, Property.MATRIX, Property.VECTOR, Property.SCALAR})


@dataclass(frozen=True)
class PartitionRule:
    operand: str
    shape: Shape
    square_tl: bool
    quadrant_properties: tuple[tuple[str | None, frozenset[Property]], ...]

    @property
    def quadrants(self) -> tuple[str | None, ...]:
        return QUADRANTS[self.shape]

    def properties(self, quadrant: str | None) -> frozenset[Property]:
        for q, props in self.quadrant_properties:
            if q == quadrant:
                return props
        raise KeyError(quadrant)

    @property
    def key(self) -> tuple[str, str, bool]:
        return (self.operand, self.shape.value, self.square_tl)

    def describe(self) -> str:
        sq = " (square TL)" if self.square_tl else ""
        return f"{self.operand}: {self.shape}{sq}"


def _quadrant_props(op: Operand, shape: Shape, square_tl: bool) -> tuple[tuple[str | None, frozenset[Property]], ...]:
    base = op.properties & INHERITED
    if shape is Shape.ONE_BY_ONE:
        return ((None, op.properties),)
    out = []
    for q in QUADRANTS[shape]:
        props = set(base)
        if op.has(Property.ZERO):
            props.add(Property.ZERO)
        elif shape is Shape.TWO_BY_TWO and square_tl:
            diagonal = q in ("TL", "BR")
            if op.has(Property.IDENTITY):
                props.add(Property.IDENTITY if diagonal else Property.ZERO)
            elif diagonal:
                props |= op.properties & (TRIANGULAR | {Property.UNIT_DIAGONAL})
                if op.properties & TRIANGULAR and op.has(Property.NONSINGULAR):
                    props.add(Property.NONSINGULAR)
                if q == "TL" and op.has(Property.EXISTS_LU):
                    props.add(Property.EXISTS_LU)
            elif q == "TR" and op.has(Property.LOWER_TRIANGULAR):
                props.add(Property.ZERO)
            elif q == "BL" and op.has(Property.UPPER_TRIANGULAR):
                props.add(Property.ZERO)
        if Property.UNIT_DIAGONAL in props:
            props.add(Property.NONSINGULAR)
        out.append((q, frozenset(props)))
    return tuple(out)


def make_rule(op: Operand, shape: Shape, square_tl: bool = False) -> PartitionRule:
    return PartitionRule(op.name, shape, square_tl, _quadrant_props(op, shape, square_tl))


def admissible_shapes(op: Operand) -> list[PartitionRule]:
    """Structure-admissible partitionings of one operand, with inherited properties."""
    if op.kind is Property.SCALAR:
        return [make_rule(op, Shape.ONE_BY_ONE)]
    if op.kind is Property.VECTOR:
        return [make_rule(op, Shape.TWO_BY_ONE), make_rule(op, Shape.ONE_BY_ONE)]
    if op.properties & (TRIANGULAR | {Property.UNIT_DIAGONAL, Property.IDENTITY}):
        return [make_rule(op, Shape.TWO_BY_TWO, True), make_rule(op, Shape.ONE_BY_ONE)]
    return [make_rule(op, s) for s in (Shape.TWO_BY_TWO, Shape.TWO_BY_ONE, Shape.ONE_BY_TWO, Shape.ONE_BY_ONE)]


# --------------------------------------------------------------------------
# conformality by unification of split variables


class NotConformal(Exception):
    pass


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def add(self) -> int:
        v = len(self.parent)
        self.parent[v] = v
        return v

    def find(self, v: int) -> int:
        while self.parent[v] != v:
            self.parent[v] = self.parent[self.parent[v]]
            v = self.parent[v]
        return v

    def union(self, a: int, b: int) -> None:
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def _unify(uf: _UnionFind, a: int | None, b: int | None) -> None:
    if a is None and b is None:
        return
    if a is None or b is None:
        raise NotConformal()
    uf.union(a, b)


def _layout(uf: _UnionFind, rules: dict[str, PartitionRule]) -> dict[str, tuple[int | None, int | None]]:
    layout = {}
    for name, rule in rules.items():
        row = col = None
        if rule.shape in (Shape.TWO_BY_ONE, Shape.TWO_BY_TWO):
            row = uf.add()
        if rule.shape in (Shape.ONE_BY_TWO, Shape.TWO_BY_TWO):
            col = row if rule.square_tl else uf.add()
        layout[name] = (row, col)
    return layout


def _splits(e: Expr, layout, uf: _UnionFind):
    """Split structure ``(row var, col var)`` of ``e``; ``False`` marks a wildcard (0 / I)."""
    if isinstance(e, Ref):
        return layout[e.name]
    if isinstance(e, (ZeroMatrix, IdentityMatrix)):
        return False
    if isinstance(e, Neg):
        return _splits(e.arg, layout, uf)
    if isinstance(e, Transpose):
        s = _splits(e.arg, layout, uf)
        return s if s is False else (s[1], s[0])
    if isinstance(e, Inverse):
        s = _splits(e.arg, layout, uf)
        if s is not False:
            _unify(uf, s[0], s[1])
        return s
    if isinstance(e, Plus):
        found = False
        for t in e.terms:
            s = _splits(t, layout, uf)
            if s is False:
                continue
            if found is not False:
                _unify(uf, found[0], s[0])
                _unify(uf, found[1], s[1])
            found = s
        return found
    if isinstance(e, Times):
        parts = [s for s in (_splits(f, layout, uf) for f in e.factors) if s is not False]
        for a, b in zip(parts, parts[1:]):
            _unify(uf, a[1], b[0])
        if not parts:
            return False
        return (parts[0][0], parts[-1][1])
    raise NotConformal()


def _check(spec: OperationSpec, rules: dict[str, PartitionRule]):
    uf = _UnionFind()
    layout = _layout(uf, rules)
    for eq in spec.postcondition:
        left = _splits(eq.lhs[0], layout, uf)
        right = _splits(eq.rhs, layout, uf)
        if left is not False and right is not False:
            _unify(uf, left[0], right[0])
            _unify(uf, left[1], right[1])
    # canonical split ids in order of first appearance
    canon: dict[int, int] = {}

    def c(v):
        if v is None:
            return None
        root = uf.find(v)
        return canon.setdefault(root, len(canon))

    return {name: (c(r), c(k)) for name, (r, k) in layout.items()}


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[PartitionRule, ...]
    traversal: Traversal
    splits: tuple[tuple[str, int | None, int | None], ...]

    def rule(self, name: str) -> PartitionRule:
        for r in self.rules:
            if r.operand == name:
                return r
        raise KeyError(name)

    def split_of(self, name: str) -> tuple[int | None, int | None]:
        for n, r, c in self.splits:
            if n == name:
                return r, c
        raise KeyError(name)

    @property
    def split_variables(self) -> list[int]:
        return sorted({v for _, r, c in self.splits for v in (r, c) if v is not None})

    @property
    def key(self) -> tuple:
        return tuple(sorted(r.key for r in self.rules))

    def describe(self) -> str:
        return ", ".join(r.describe() for r in self.rules) + f"; traversal {self.traversal}"


def _traversal(spec: OperationSpec, rules: dict[str, PartitionRule]) -> Traversal:
    shapes = {rules[op.name].shape for op in spec.outputs}
    if Shape.TWO_BY_TWO in shapes:
        return Traversal.TL_TO_BR
    if Shape.TWO_BY_ONE in shapes:
        return Traversal.T_TO_B
    if Shape.ONE_BY_TWO in shapes:
        return Traversal.L_TO_R
    return Traversal.NONE


def _finalize(spec: OperationSpec, rules: dict[str, PartitionRule], layout) -> RuleSet:
    final = []
    for op in spec.operands:
        rule = rules[op.name]
        row, col = layout[op.name]
        if rule.shape is Shape.TWO_BY_TWO and not rule.square_tl and row == col:
            # a generic 2x2 that unification made square: re-derive inheritance
            rule = make_rule(op, Shape.TWO_BY_TWO, True)
        final.append(rule)
    splits = tuple((op.name, *layout[op.name]) for op in spec.operands)
    return RuleSet(tuple(final), _traversal(spec, rules), splits)


def enumerate_rule_sets(spec: OperationSpec) -> list[RuleSet]:
    """All conformal rule sets except the all-1x1 one, deduplicated, deterministic order."""
    choices = [admissible_shapes(op) for op in spec.operands]
    seen = set()
    out = []
    for combo in itertools.product(*choices):
        if all(r.shape is Shape.ONE_BY_ONE for r in combo):
            continue
        rules = {r.operand: r for r in combo}
        try:
            layout = _check(spec, rules)
        except NotConformal:
            continue
        rs = _finalize(spec, rules, layout)
        if rs.key in seen:
            continue
        seen.add(rs.key)
        out.append(rs)
    # outputs' shapes first: 1x2 before 2x1 before 2x2
    order = list(Shape)
    out.sort(key=lambda rs: (
        [order.index(rs.rule(op.name).shape) for op in spec.outputs],
        [order.index(r.shape) for r in rs.rules],
    ))
    return out


# --------------------------------------------------------------------------
# partitioned operands


def quadrant_dims(spec: OperationSpec, rs: RuleSet, r: Ref) -> tuple[Size, Size]:
    op = spec.operand(r.name)
    row_var, col_var = rs.split_of(r.name)
    row_part, col_part = QUADRANT_PARTS[r.quadrant]
    rows = op.rows if row_var is None or row_part == "full" else Size(op.rows.base, row_part, row_var)
    cols = op.cols if col_var is None or col_part == "full" else Size(op.cols.base, col_part, col_var)
    return rows, cols


def quadrant_refs(spec: OperationSpec, rs: RuleSet, name: str, include_literal: bool = False) -> list[Ref]:
    """Refs of the quadrants of ``name``; Zero/Identity quadrants only on request."""
    rule = rs.rule(name)
    out = []
    for q, props in rule.quadrant_properties:
        if not include_literal and props & {Property.ZERO, Property.IDENTITY}:
            continue
        out.append(Ref(name, q))
    return out


def quadrant_properties(spec: OperationSpec, rs: RuleSet) -> dict[Ref, frozenset[Property]]:
    out = {}
    for rule in rs.rules:
        for q, props in rule.quadrant_properties:
            out[Ref(rule.operand, q)] = props
    return out


def block_form(rs: RuleSet, name: str) -> Expr:
    rule = rs.rule(name)
    if rule.shape is Shape.ONE_BY_ONE:
        return Ref(name)
    cells = []
    for q, props in rule.quadrant_properties:
        if Property.ZERO in props:
            cells.append(ZERO)
        elif Property.IDENTITY in props:
            cells.append(IDENTITY)
        else:
            cells.append(Ref(name, q))
    nr, nc = GRID[rule.shape]
    return Block(nr, nc, tuple(cells))


def apply_ruleset(spec: OperationSpec, rs: RuleSet) -> list[Equation]:
    """The partitioned postcondition: every operand replaced by its block form."""
    bindings = {Ref(op.name): block_form(rs, op.name) for op in spec.operands}
    return [
        Equation(tuple(substitute(x, bindings) for x in eq.lhs), substitute(eq.rhs, bindings))
        for eq in spec.postcondition
    ]


def anchor(spec: OperationSpec, rs: RuleSet) -> Ref:
    """The operand quadrant that starts empty and grows to the whole operand."""
    want = {
        Traversal.TL_TO_BR: (Shape.TWO_BY_TWO, "TL"),
        Traversal.T_TO_B: (Shape.TWO_BY_ONE, "T"),
        Traversal.L_TO_R: (Shape.ONE_BY_TWO, "L"),
    }.get(rs.traversal)
    if want is None:
        return Ref(spec.operands[0].name)
    all_vars = set(rs.split_variables)

    def covers(name: str) -> bool:
        return {v for v in rs.split_of(name) if v is not None} == all_vars

    ordered = [op for op in spec.operands if op.is_input] + [op for op in spec.operands if not op.is_input]
    for strict in (True, False):
        for op in ordered:
            rule = rs.rule(op.name)
            if rule.shape is Shape.ONE_BY_ONE:
                continue
            if strict and (rule.shape is not want[0] or not covers(op.name)):
                continue
            return Ref(op.name, rule.quadrants[0])
    return Ref(spec.operands[0].name)


def all_quadrant_refs(spec: OperationSpec, rs: RuleSet, names: Iterable[str]) -> list[Ref]:
    out = []
    for n in names:
        out.extend(quadrant_refs(spec, rs, n))
    return out
