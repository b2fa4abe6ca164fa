"""Candidate loop-invariants: downset enumeration, rendering and feasibility."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .expr import Equation, Expr, Ref, equations_equivalent, normalize, substitute, to_text
from .opspec import OperationSpec
from .partition import RuleSet, anchor, enumerate_rule_sets
from .patterns import PatternRegistry, unfold
from .pme import PME, derive_pme
from .rewrite import Boundary, boundary_rewrite
from .tasks import DepGraph, Task, build_graph, decompose

# --------------------------------------------------------------------------
# downsets


def enumerate_downsets(g: DepGraph) -> list[frozenset[int]]:
    """Dependency-closed task subsets, grown level by level.

    Starting from the empty subgraph, each level extends every subgraph found
    so far by each nonempty subset of the level's nodes whose predecessors it
    already contains.  Accessible nodes are taken in id order and subsets in
    binary-counting order.
    """
    preds = {t.id: g.predecessors(t.id) for t in g.tasks}
    out: list[frozenset[int]] = [frozenset()]
    for level in g.levels:
        for sub in list(out):
            acc = sorted(i for i in level if i not in sub and preds[i] <= sub)
            for mask in range(1, 1 << len(acc)):
                chosen = {acc[j] for j in range(len(acc)) if mask >> j & 1}
                out.append(sub | chosen)
    return out


def is_closed(g: DepGraph, subset: Iterable[int]) -> bool:
    s = set(subset)
    return all(g.predecessors(i) <= s for i in s)


def brute_force_downsets(g: DepGraph) -> set[frozenset[int]]:
    ids = [t.id for t in g.tasks]
    out = set()
    for r in range(len(ids) + 1):
        for c in itertools.combinations(ids, r):
            if is_closed(g, c):
                out.add(frozenset(c))
    return out


# --------------------------------------------------------------------------
# rendering


class StateKind(str, Enum):
    UNCONSTRAINED = "Unconstrained"
    EQUALITY = "Equality"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class QuadrantState:
    kind: StateKind
    equations: tuple[Equation, ...] = ()

    def text(self) -> str:
        if self.kind is StateKind.UNCONSTRAINED:
            return "≠"
        return "; ".join(map(str, self.equations))


UNCONSTRAINED = QuadrantState(StateKind.UNCONSTRAINED)


@dataclass(frozen=True)
class LoopGuard:
    anchor: Ref
    operand: str

    def text(self) -> str:
        return f"size({to_text(self.anchor)}) < size({self.operand})"

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class LoopInvariant:
    subgraph: tuple[int, ...]
    grid: tuple[tuple[str | None, QuadrantState], ...]
    guard: LoopGuard

    def state(self, quadrant: str | None) -> QuadrantState:
        for q, s in self.grid:
            if q == quadrant:
                return s
        raise KeyError(quadrant)

    def equations(self) -> list[Equation]:
        return [eq for _, s in self.grid for eq in s.equations]


def _partial_state(tasks: Sequence[Task]) -> tuple[Equation, ...]:
    """Compose in-place task effects: every written operand equals its final value."""
    state: dict[Ref, Expr] = {}
    multi: list[Equation] = []
    for t in tasks:
        rhs = substitute(t.expr, state)
        if len(t.outputs) > 1:
            multi.append(Equation(t.outputs, rhs))
            for r in t.outputs:
                state.pop(r, None)
        else:
            state[t.outputs[0]] = rhs
    return tuple(multi) + tuple(Equation((r,), normalize(v)) for r, v in state.items())


def render_invariant(subset: Iterable[int], pme: PME, g: DepGraph, guard: LoopGuard) -> LoopInvariant:
    done = set(subset)
    grid = []
    for cell in pme.cells:
        ts = [t for t in g.tasks if t.quadrant == cell.quadrant]
        finished = [t for t in ts if t.id in done]
        if not finished:
            grid.append((cell.quadrant, UNCONSTRAINED))
        elif len(finished) == len(ts):
            grid.append((cell.quadrant, QuadrantState(StateKind.EQUALITY, cell.equations)))
        else:
            grid.append((cell.quadrant, QuadrantState(StateKind.EQUALITY, _partial_state(finished))))
    return LoopInvariant(tuple(sorted(done)), tuple(grid), guard)


# --------------------------------------------------------------------------
# feasibility


@dataclass(frozen=True)
class FeasibilityReport:
    candidate: tuple[int, ...]
    initial_ok: bool
    final_ok: bool
    initial_residual: tuple[Equation, ...]
    final_predicate: tuple[Equation, ...]
    witness: str | None = None

    @property
    def feasible(self) -> bool:
        return self.initial_ok and self.final_ok


def _same_system(a: Sequence[Equation], b: Sequence[Equation]) -> bool:
    return all(any(equations_equivalent(x, y) for y in b) for x in a) and all(
        any(equations_equivalent(x, y) for y in a) for x in b
    )


def check_feasibility(
    inv: LoopInvariant, spec: OperationSpec, rs: RuleSet, registry: PatternRegistry
) -> FeasibilityReport:
    pred = inv.equations()
    initial = boundary_rewrite(pred, Boundary.INITIAL, spec, rs)
    final = boundary_rewrite(pred, Boundary.FINAL, spec, rs)
    initial_ok = not initial
    final_ok = bool(final) and _same_system(unfold(final, registry), list(spec.postcondition))
    witness = None
    if not final:
        witness = "final predicate empty: it cannot imply the postcondition"
    elif not final_ok:
        witness = "final predicate differs from the postcondition: " + "; ".join(map(str, final))
    if not initial_ok:
        w = "initial residual: " + "; ".join(map(str, initial))
        witness = w if witness is None else f"{witness}; {w}"
    return FeasibilityReport(inv.subgraph, initial_ok, final_ok, tuple(initial), tuple(final), witness)


def feasibility_filter(
    candidates: Iterable[frozenset[int]],
    pme: PME,
    g: DepGraph,
    spec: OperationSpec,
    registry: PatternRegistry,
) -> list[tuple[LoopInvariant, FeasibilityReport]]:
    """Render and check every candidate; all pairs are returned, feasible or not."""
    guard = loop_guard(spec, pme.ruleset)
    out = []
    for c in candidates:
        inv = render_invariant(c, pme, g, guard)
        out.append((inv, check_feasibility(inv, spec, pme.ruleset, registry)))
    return out


def loop_guard(spec: OperationSpec, rs: RuleSet) -> LoopGuard:
    a = anchor(spec, rs)
    return LoopGuard(a, a.name)


# --------------------------------------------------------------------------
# the whole pipeline


@dataclass(frozen=True)
class PMEReport:
    index: int
    pme: PME
    tasks: tuple[Task, ...]
    graph: DepGraph
    candidates: tuple[tuple[int, ...], ...]
    feasibility: tuple[FeasibilityReport, ...]
    invariants: tuple[LoopInvariant, ...]
    guard: LoopGuard


@dataclass
class Derivation:
    spec: OperationSpec
    registry: PatternRegistry
    rule_sets: list[RuleSet]
    pmes: list[PMEReport] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def assumptions(self) -> list[str]:
        return list(dict.fromkeys(a for p in self.pmes for a in p.pme.assumptions))


def analyze_pme(index: int, pme: PME, spec: OperationSpec, registry: PatternRegistry) -> PMEReport:
    tasks = decompose(pme)
    g = build_graph(tasks)
    cands = enumerate_downsets(g)
    pairs = feasibility_filter(cands, pme, g, spec, registry)
    return PMEReport(
        index=index,
        pme=pme,
        tasks=tuple(tasks),
        graph=g,
        candidates=tuple(tuple(sorted(c)) for c in cands),
        feasibility=tuple(r for _, r in pairs),
        invariants=tuple(inv for inv, r in pairs if r.feasible),
        guard=loop_guard(spec, pme.ruleset),
    )


def generate_invariants(spec: OperationSpec, registry: PatternRegistry | None = None) -> Derivation:
    """Rule sets, PMEs, tasks, graphs, candidates and feasible invariants of ``spec``."""
    from .pme import DerivationStuck
    from .tasks import DecompositionError, GraphCycleError

    if registry is None:
        registry = PatternRegistry()
    registry.learn(spec)
    rule_sets = enumerate_rule_sets(spec)
    d = Derivation(spec, registry, rule_sets)
    if not rule_sets:
        d.diagnostics.append(f"{spec.name}: no admissible rule set (only the all-1x1 partitioning exists)")
    for rs in rule_sets:
        try:
            pme = derive_pme(spec, rs, registry)
        except DerivationStuck as exc:
            d.diagnostics.append(str(exc))
            continue
        try:
            d.pmes.append(analyze_pme(len(d.pmes) + 1, pme, spec, registry))
        except (DecompositionError, GraphCycleError) as exc:
            d.diagnostics.append(f"rule set [{rs.describe()}]: {exc}")
    return d
