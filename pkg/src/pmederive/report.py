"""Serialization of derivations: deterministic JSON, text grids, LaTeX and DOT."""

from __future__ import annotations

import json
from importlib import resources
from typing import Sequence

from .expr import Equation, equation_latex, equation_text, sexpr, to_text
from .invariants import Derivation, LoopInvariant, PMEReport, StateKind
from .partition import RuleSet, quadrant_label
from .pme import PME
from .tasks import DepGraph, Task, to_dot

SCHEMA_VERSION = "1.0"
STAGES = ("rulesets", "pme", "tasks", "graph", "candidates", "invariants")


def load_schema() -> dict:
    return json.loads(resources.files("pmederive").joinpath("schema/report.schema.json").read_text())


# --------------------------------------------------------------------------
# JSON


def _eq(eq: Equation) -> dict:
    return {"text": equation_text(eq), "sexpr": f"(= ({' '.join(map(sexpr, eq.lhs))}) {sexpr(eq.rhs)})"}


def ruleset_json(rs: RuleSet) -> dict:
    return {
        "traversal": str(rs.traversal),
        "rules": [
            {
                "operand": r.operand,
                "shape": str(r.shape),
                "square_tl": r.square_tl,
                "quadrants": [
                    {"quadrant": quadrant_label(q), "properties": sorted(str(p) for p in props)}
                    for q, props in r.quadrant_properties
                ],
            }
            for r in rs.rules
        ],
        "splits": [{"operand": n, "row": r, "col": c} for n, r, c in rs.splits],
    }


def pme_json(pme: PME) -> dict:
    return {
        "shape": list(pme.shape),
        "cells": [
            {
                "quadrant": quadrant_label(c.quadrant),
                "equations": [{**_eq(s.equation), "kind": str(s.kind), "pattern": s.pattern} for s in c.solved],
            }
            for c in pme.cells
        ],
        "assumptions": list(pme.assumptions),
        "solve_order": [quadrant_label(q) for q in pme.solve_order],
    }


def task_json(t: Task) -> dict:
    return {
        "id": t.id,
        "text": t.text(),
        "quadrant": quadrant_label(t.quadrant),
        "outputs": [to_text(r) for r in t.outputs],
        "inputs": [to_text(r) for r in t.inputs],
        "commute_group": t.commute_group,
    }


def graph_json(g: DepGraph) -> dict:
    return {
        "edges": [{"from": a, "to": b, "kind": str(k)} for a, b, k in g.edges],
        "levels": [list(lvl) for lvl in g.levels],
        "commute_groups": [list(ids) for _, ids in sorted(g.commute_groups().items())],
    }


def invariant_json(inv: LoopInvariant) -> dict:
    return {
        "subgraph": list(inv.subgraph),
        "guard": inv.guard.text(),
        "grid": [
            {
                "quadrant": quadrant_label(q),
                "state": str(s.kind),
                "equations": [_eq(e) for e in s.equations],
            }
            for q, s in inv.grid
        ],
    }


def pme_report_json(p: PMEReport, stage: str = "invariants") -> dict:
    upto = STAGES.index(stage)
    out: dict = {"index": p.index, "ruleset": ruleset_json(p.pme.ruleset)}
    if upto >= STAGES.index("pme"):
        out["pme"] = pme_json(p.pme)
    if upto >= STAGES.index("tasks"):
        out["tasks"] = [task_json(t) for t in p.tasks]
    if upto >= STAGES.index("graph"):
        out["graph"] = graph_json(p.graph)
    if upto >= STAGES.index("candidates"):
        out["candidates"] = [list(c) for c in p.candidates]
    if upto >= STAGES.index("invariants"):
        out["feasibility"] = [
            {
                "subgraph": list(f.candidate),
                "initial_ok": f.initial_ok,
                "final_ok": f.final_ok,
                "feasible": f.feasible,
                "witness": f.witness,
            }
            for f in p.feasibility
        ]
        out["guard"] = p.guard.text()
        out["invariants"] = [invariant_json(i) for i in p.invariants]
    return out


def derivation_json(d: Derivation, stage: str = "invariants", pmes: Sequence[int] | None = None, verification=None) -> dict:
    spec = d.spec
    out = {
        "schema_version": SCHEMA_VERSION,
        "operation": spec.name,
        "stage": stage,
        "operands": [
            {
                "name": op.name,
                "rows": str(op.rows),
                "cols": str(op.cols),
                "properties": sorted(str(p) for p in op.properties),
            }
            for op in spec.operands
        ],
        "postcondition": [_eq(e) for e in spec.postcondition],
        "rule_sets": [ruleset_json(rs) for rs in d.rule_sets],
        "pmes": [pme_report_json(p, stage) for p in d.pmes if pmes is None or p.index in pmes],
        "assumptions": d.assumptions,
        "diagnostics": list(d.diagnostics),
    }
    if verification is not None:
        out["verification"] = verification
    return out


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# text grids


def grid_text(shape: tuple[int, int], cells: Sequence[Sequence[str]]) -> str:
    """Box-drawn grid; each cell is a list of lines, laid out row-major."""
    nr, nc = shape
    widths = [max((len(line) for i in range(nr) for line in cells[i * nc + j]), default=1) for j in range(nc)]
    widths = [max(w, 1) for w in widths]
    sep = "─┼─".join("─" * w for w in widths)
    rows = []
    for i in range(nr):
        row = [cells[i * nc + j] for j in range(nc)]
        height = max(len(c) for c in row) or 1
        for k in range(height):
            rows.append(" │ ".join((c[k] if k < len(c) else "").ljust(w) for c, w in zip(row, widths)).rstrip())
        if i < nr - 1:
            rows.append(sep)
    return "\n".join(rows) + "\n"


def pme_text(pme: PME) -> str:
    cells = [[equation_text(e) for e in c.equations] or ["(no equation)"] for c in pme.cells]
    return grid_text(pme.shape, cells)


def invariant_text(inv: LoopInvariant, shape: tuple[int, int]) -> str:
    cells = []
    for _, s in inv.grid:
        cells.append(["≠"] if s.kind is StateKind.UNCONSTRAINED else [equation_text(e) for e in s.equations])
    return grid_text(shape, cells)


def derivation_text(d: Derivation, stage: str = "invariants", pmes: Sequence[int] | None = None) -> str:
    upto = STAGES.index(stage)
    lines = [f"operation {d.spec.name}", f"rule sets: {len(d.rule_sets)}"]
    for i, rs in enumerate(d.rule_sets, 1):
        lines.append(f"  [{i}] {rs.describe()}")
    for p in d.pmes:
        if pmes is not None and p.index not in pmes:
            continue
        lines.append("")
        lines.append(f"== PME {p.index}: {p.pme.ruleset.describe()}")
        if upto >= STAGES.index("pme"):
            lines.append(pme_text(p.pme).rstrip("\n"))
            for a in p.pme.assumptions:
                lines.append(f"assume {a}")
        if upto >= STAGES.index("tasks"):
            lines.append(f"tasks: {len(p.tasks)}")
            for t in p.tasks:
                grp = f"   [commute group {t.commute_group}]" if t.commute_group else ""
                lines.append(f"  {t.id}: {t.text()}{grp}")
        if upto >= STAGES.index("graph"):
            lines.append("edges: " + ", ".join(f"{a}->{b} ({k})" for a, b, k in p.graph.edges))
            lines.append("levels: " + " ".join("{" + ",".join(map(str, lvl)) + "}" for lvl in p.graph.levels))
        if upto >= STAGES.index("candidates"):
            lines.append(f"candidates: {len(p.candidates)}")
        if upto >= STAGES.index("invariants"):
            lines.append(f"invariants: {len(p.invariants)}   guard: {p.guard.text()}")
            for f in p.feasibility:
                if not f.feasible:
                    lines.append(f"  rejected {{{','.join(map(str, f.candidate))}}}: {f.witness}")
            for n, inv in enumerate(p.invariants, 1):
                lines.append(f"-- invariant {n}, tasks {{{','.join(map(str, inv.subgraph))}}}")
                lines.append(invariant_text(inv, p.pme.shape).rstrip("\n"))
    if d.diagnostics:
        lines.append("")
        lines.extend(f"note: {x}" for x in d.diagnostics)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# LaTeX and DOT


def grid_latex(shape: tuple[int, int], cells: Sequence[Sequence[str]]) -> str:
    nr, nc = shape
    body = []
    for i in range(nr):
        row = []
        for j in range(nc):
            c = cells[i * nc + j]
            row.append(c[0] if len(c) == 1 else r"\begin{array}{c}" + r" \\ ".join(c) + r"\end{array}")
        body.append(" & ".join(row))
    sep = " \\\\ \\hline\n  "
    return "\\left(\\begin{array}{" + "|".join("c" * nc) + "}\n  " + sep.join(body) + "\n\\end{array}\\right)"


def pme_latex(pme: PME) -> str:
    return grid_latex(pme.shape, [[equation_latex(e) for e in c.equations] for c in pme.cells])


def invariant_latex(inv: LoopInvariant, shape: tuple[int, int]) -> str:
    cells = []
    for _, s in inv.grid:
        cells.append([r"\neq"] if s.kind is StateKind.UNCONSTRAINED else [equation_latex(e) for e in s.equations])
    return grid_latex(shape, cells)


def derivation_latex(d: Derivation, stage: str = "invariants", pmes: Sequence[int] | None = None) -> str:
    out = [f"% operation {d.spec.name}"]
    for p in d.pmes:
        if pmes is not None and p.index not in pmes:
            continue
        out.append(f"% PME {p.index}: {p.pme.ruleset.describe()}")
        out.append(r"\[" + "\n" + pme_latex(p.pme) + "\n" + r"\]")
        if STAGES.index(stage) >= STAGES.index("invariants"):
            for inv in p.invariants:
                out.append(f"% invariant over tasks {{{','.join(map(str, inv.subgraph))}}}")
                out.append(r"\[" + "\n" + invariant_latex(inv, p.pme.shape) + "\n" + r"\]")
    return "\n".join(out) + "\n"


def derivation_dot(d: Derivation, pmes: Sequence[int] | None = None) -> str:
    return "".join(
        to_dot(p.graph, f"{d.spec.name} PME {p.index}") for p in d.pmes if pmes is None or p.index in pmes
    )

