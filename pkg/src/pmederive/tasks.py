"""Decomposition of PME cells into basic tasks and their dependency graph."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .expr import (
    Equation,
    Expr,
    OpApply,
    Plus,
    Property,
    Ref,
    equation_text,
    normalize,
    operands_of,
    sexpr,
    terms_of,
    to_text,
)
from .partition import quadrant_label
from .pme import PME


class DecompositionError(ValueError):
    def __init__(self, message: str, subterm: Expr):
        super().__init__(f"{message}: {to_text(subterm)}")
        self.subterm = subterm


class GraphCycleError(RuntimeError):
    def __init__(self, edges):
        self.edges = edges
        listing = ", ".join(f"{a}->{b}" for a, b, _ in edges)
        super().__init__(f"dependency graph has a cycle among edges: {listing}")


@dataclass(frozen=True)
class Task:
    id: int
    outputs: tuple[Ref, ...]
    inputs: tuple[Ref, ...]
    expr: Expr
    quadrant: str | None
    commute_group: int | None = None

    @property
    def in_place(self) -> bool:
        return len(self.outputs) == 1 and self.outputs[0] in self.inputs

    @property
    def equation(self) -> Equation:
        return Equation(self.outputs, self.expr)

    def text(self) -> str:
        return equation_text(self.equation).replace(" = ", " := ", 1)

    def __str__(self) -> str:
        return self.text()


def _sorted_refs(refs: Iterable[Ref]) -> tuple[Ref, ...]:
    return tuple(sorted(set(refs), key=sexpr))


class _Builder:
    def __init__(self, input_names: set[str]):
        self.input_names = input_names
        self.tasks: list[Task] = []
        self.groups = 0

    def emit(self, outputs, expr, quadrant, group=None) -> None:
        expr = normalize(expr)
        self.tasks.append(Task(len(self.tasks) + 1, tuple(outputs), _sorted_refs(operands_of(expr)), expr, quadrant, group))

    def updates(self, arg: Expr, quadrant) -> Ref:
        """Emit in-place update tasks for a compound argument; return the updated operand."""
        terms = terms_of(arg)
        leads = [t for t in terms if isinstance(t, Ref)]
        if not leads:
            raise DecompositionError("argument has no operand to update in place", arg)
        inputs = [t for t in leads if t.name in self.input_names]
        target = (inputs or leads)[0]
        rest = list(terms)
        rest.remove(target)
        for t in rest:
            if isinstance(t, Plus):
                raise DecompositionError("nested sum in an update", t)
        group = None
        if len(rest) > 1:
            self.groups += 1
            group = self.groups
        for t in rest:
            self.emit((target,), Plus((target, t)), quadrant, group)
        return target


def decompose(pme: PME, input_names: Iterable[str] | None = None) -> list[Task]:
    """Tasks of a PME in row-major quadrant order, left-to-right within each cell.

    ``input_names`` selects which operands may be overwritten by in-place
    updates; by default every operand carrying Input in the rule set.
    """
    if input_names is None:
        input_names = {
            r.operand for r in pme.ruleset.rules if any(Property.INPUT in p for _, p in r.quadrant_properties)
        }
    b = _Builder(set(input_names))
    for cell in pme.cells:
        for eq in cell.equations:
            rhs = eq.rhs
            if isinstance(rhs, OpApply):
                args = []
                for a in rhs.args:
                    args.append(a if isinstance(a, Ref) else b.updates(a, cell.quadrant))
                b.emit(eq.lhs, OpApply(rhs.op, tuple(args), rhs.n_outputs), cell.quadrant)
            else:
                b.emit(eq.lhs, rhs, cell.quadrant)
    return b.tasks


# --------------------------------------------------------------------------
# dependencies


class DepKind(str, Enum):
    TRUE = "True"
    ANTI = "Anti"
    OUTPUT = "Output"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DepGraph:
    tasks: tuple[Task, ...]
    edges: tuple[tuple[int, int, DepKind], ...]
    levels: tuple[tuple[int, ...], ...]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.tasks)

    def task(self, tid: int) -> Task:
        return self.tasks[tid - 1]

    def predecessors(self, tid: int) -> frozenset[int]:
        return frozenset(a for a, b, _ in self.edges if b == tid)

    def successors(self, tid: int) -> frozenset[int]:
        return frozenset(b for a, b, _ in self.edges if a == tid)

    def level_of(self, tid: int) -> int:
        for i, lvl in enumerate(self.levels):
            if tid in lvl:
                return i
        raise KeyError(tid)

    def commute_groups(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for t in self.tasks:
            if t.commute_group is not None:
                out.setdefault(t.commute_group, []).append(t.id)
        return {g: tuple(ids) for g, ids in out.items()}


def dependencies(tasks: list[Task]) -> list[tuple[int, int, DepKind]]:
    edges = []
    for t in tasks:
        for u in tasks:
            if t.id == u.id:
                continue
            if t.commute_group is not None and t.commute_group == u.commute_group:
                continue
            same = t.quadrant == u.quadrant
            before = t.id < u.id
            out_t, in_t = set(t.outputs), set(t.inputs)
            out_u, in_u = set(u.outputs), set(u.inputs)
            if out_t & in_u and (not same or before):
                edges.append((t.id, u.id, DepKind.TRUE))
            elif same and before and in_t & out_u:
                edges.append((t.id, u.id, DepKind.ANTI))
            elif same and before and out_t & out_u:
                edges.append((t.id, u.id, DepKind.OUTPUT))
    return sorted(edges, key=lambda e: (e[0], e[1]))


def levels(ids: Iterable[int], edges: Iterable[tuple[int, int, DepKind]]) -> tuple[tuple[int, ...], ...]:
    """Group nodes by the length of the longest path reaching them from a root."""
    ids = list(ids)
    edges = list(edges)
    preds = {i: [a for a, b, _ in edges if b == i] for i in ids}
    depth: dict[int, int] = {}
    state: dict[int, int] = {}

    def visit(i: int) -> int:
        if state.get(i) == 2:
            return depth[i]
        if state.get(i) == 1:
            raise GraphCycleError(edges)
        state[i] = 1
        depth[i] = max((visit(p) + 1 for p in preds[i]), default=0)
        state[i] = 2
        return depth[i]

    for i in ids:
        visit(i)
    if not ids:
        return ()
    out = [[] for _ in range(max(depth.values()) + 1)]
    for i in ids:
        out[depth[i]].append(i)
    return tuple(tuple(sorted(lvl)) for lvl in out)


def build_graph(tasks: list[Task]) -> DepGraph:
    edges = dependencies(tasks)
    return DepGraph(tuple(tasks), tuple(edges), levels([t.id for t in tasks], edges))


_STYLE = {DepKind.TRUE: "solid", DepKind.ANTI: "dashed", DepKind.OUTPUT: "dotted"}


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(g: DepGraph, name: str = "deps") -> str:
    lines = [f'digraph "{_dot_escape(name)}" {{', "  rankdir=TB;", "  node [shape=box];"]
    for t in g.tasks:
        label = f"{t.id}: {t.text()}"
        lines.append(f'  t{t.id} [label="{_dot_escape(label)}", quadrant="{quadrant_label(t.quadrant)}"];')
    for lvl in g.levels:
        lines.append("  { rank=same; " + " ".join(f"t{i};" for i in lvl) + " }")
    for a, b, kind in g.edges:
        lines.append(f'  t{a} -> t{b} [style={_STYLE[kind]}, kind="{kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
