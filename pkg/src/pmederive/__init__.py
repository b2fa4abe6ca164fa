"""Derivation of partitioned matrix expressions, task graphs and loop invariants."""

from .expr import Equation, Expr, Operand, Property, Ref, Size, normalize, to_text
from .invariants import Derivation, LoopInvariant, enumerate_downsets, generate_invariants
from .opspec import OperationSpec, SpecError, load_spec, parse_spec
from .oracle import check_derivation, random_instance, reference_solve
from .partition import RuleSet, enumerate_rule_sets
from .patterns import PatternRegistry
from .pme import PME, derive_pme, derive_pmes
from .tasks import DepGraph, Task, build_graph, decompose

__all__ = [
    "DepGraph",
    "Derivation",
    "Equation",
    "Expr",
    "LoopInvariant",
    "Operand",
    "OperationSpec",
    "PME",
    "PatternRegistry",
    "Property",
    "Ref",
    "RuleSet",
    "Size",
    "SpecError",
    "Task",
    "build_graph",
    "check_derivation",
    "decompose",
    "derive_pme",
    "derive_pmes",
    "enumerate_downsets",
    "enumerate_rule_sets",
    "generate_invariants",
    "load_spec",
    "normalize",
    "parse_spec",
    "random_instance",
    "reference_solve",
    "to_text",
]
