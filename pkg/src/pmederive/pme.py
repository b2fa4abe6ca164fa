"""Iterative derivation of Partitioned Matrix Expressions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .expr import Equation, Property, Ref, operands_of
from .opspec import OperationSpec
from .partition import RuleSet, apply_ruleset, enumerate_rule_sets, quadrant_properties
from .patterns import MatchKind, MatchResult, PatternRegistry, isolate_unknown, recognize
from .rewrite import QuadrantGrid, distribute


@dataclass(frozen=True)
class SolvedEquation:
    equation: Equation
    kind: MatchKind
    pattern: str


@dataclass(frozen=True)
class PMECell:
    quadrant: str | None
    solved: tuple[SolvedEquation, ...]

    @property
    def equations(self) -> tuple[Equation, ...]:
        return tuple(s.equation for s in self.solved)

    @property
    def outputs(self) -> tuple[Ref, ...]:
        return tuple(r for s in self.solved for r in s.equation.lhs)


@dataclass(frozen=True)
class PME:
    ruleset: RuleSet
    shape: tuple[int, int]
    cells: tuple[PMECell, ...]
    assumptions: tuple[str, ...]
    solve_order: tuple[str | None, ...]

    def cell(self, quadrant: str | None) -> PMECell:
        for c in self.cells:
            if c.quadrant == quadrant:
                return c
        raise KeyError(quadrant)

    @property
    def quadrants(self) -> tuple[str | None, ...]:
        return tuple(c.quadrant for c in self.cells)


class DerivationStuck(Exception):
    def __init__(self, ruleset: RuleSet, pending: dict):
        self.ruleset = ruleset
        self.pending = pending
        detail = "; ".join(f"{q or 'Whole'}: {why}" for q, why in pending.items())
        super().__init__(f"no progress for rule set [{ruleset.describe()}]: {detail}")


def _solve_cell(
    eqs: tuple[Equation, ...],
    known: frozenset[Ref],
    registry: PatternRegistry,
    props: Mapping[Ref, frozenset[Property]],
    nonsingular: dict[Ref, str],
) -> tuple[list[MatchResult], str]:
    r = recognize(eqs, known, registry, props)
    if r:
        return [r], ""
    results = []
    k = set(known)
    for eq in eqs:
        iso = isolate_unknown(eq, frozenset(k), props, nonsingular)
        if not iso:
            return [], f"{r.reason}; {iso.reason}"
        results.append(iso)
        k.update(iso.equation.lhs)
    return results, ""


def derive_pme(spec: OperationSpec, rs: RuleSet, registry: PatternRegistry) -> PME:
    grid: QuadrantGrid = distribute(apply_ruleset(spec, rs))
    props = quadrant_properties(spec, rs)
    input_names = {op.name for op in spec.inputs}
    known = {r for r in props if r.name in input_names}
    for eq in grid.equations():
        known |= {r for r in operands_of(eq) if r.name in input_names}
    nonsingular: dict[Ref, str] = {}
    solved: dict[str | None, tuple[SolvedEquation, ...]] = {}
    order: list[str | None] = []
    assumptions: list[str] = []
    pending = {q: "" for q, eqs in grid.cells if eqs}
    while pending:
        progress = False
        for q, eqs in grid.cells:
            if q not in pending:
                continue
            results, why = _solve_cell(eqs, frozenset(known), registry, props, nonsingular)
            if not results:
                pending[q] = why
                continue
            cell = []
            for res in results:
                cell.append(SolvedEquation(res.equation, res.kind, res.pattern or ""))
                known.update(res.equation.lhs)
                assumptions.extend(res.assumptions)
                nonsingular.update(dict(res.nonsingular))
            solved[q] = tuple(cell)
            order.append(q)
            del pending[q]
            progress = True
        if not progress:
            raise DerivationStuck(rs, pending)
    cells = tuple(PMECell(q, solved.get(q, ())) for q in grid.quadrants)
    return PME(rs, grid.shape, cells, tuple(dict.fromkeys(assumptions)), tuple(order))


def derive_pmes(
    spec: OperationSpec,
    registry: PatternRegistry | None = None,
    diagnostics: list[str] | None = None,
) -> list[PME]:
    """One PME per admissible rule set; rule sets whose derivation gets stuck are dropped."""
    if registry is None:
        registry = PatternRegistry()
    registry.learn(spec)
    diags = diagnostics if diagnostics is not None else []
    rule_sets = enumerate_rule_sets(spec)
    if not rule_sets:
        diags.append(f"{spec.name}: no admissible rule set (only the all-1x1 partitioning exists)")
        return []
    out = []
    for rs in rule_sets:
        try:
            out.append(derive_pme(spec, rs, registry))
        except DerivationStuck as exc:
            diags.append(str(exc))
    return out
