"""Operation patterns: recognition of known operations and isolation of unknowns.

A learned pattern is the postcondition of an operation description read as a
template whose placeholders are the operand names.  Recognition splits every
equation of a quadrant system into the terms that involve unknown
sub-operands and the known remainder, then matches both sides against the
template.  Isolation solves a single equation for its only unknown.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Sequence

from .expr import (
    TRIANGULAR,
    Equation,
    Expr,
    Inverse,
    Neg,
    OpApply,
    Plus,
    Property,
    Ref,
    Times,
    Transpose,
    _negate,
    equation_sexpr,
    normalize,
    operands_of,
    sorted_properties,
    substitute,
    terms_of,
    to_text,
    walk,
)
from .opspec import OperationSpec

# properties a binding must carry structurally (cannot be assumed)
STRUCTURAL = frozenset({Property.LOWER_TRIANGULAR, Property.UPPER_TRIANGULAR, Property.UNIT_DIAGONAL})
# properties that become recorded assumptions when they cannot be shown
ASSUMABLE = frozenset({Property.EXISTS_LU, Property.NONSINGULAR})

BUILTIN_PATTERNS = (
    ("triangular-solve", "X = A^-1 B or X = B A^-1 with A known, triangular and nonsingular"),
    ("solve", "X = A^-1 B or X = B A^-1 with A known and nonsingular"),
    ("assign", "X = expression of known operands (sum, product, transpose, inverse)"),
)


class PatternCollision(ValueError):
    pass


@dataclass(frozen=True)
class OperationPattern:
    name: str
    template_equations: tuple[Equation, ...]
    constraints: tuple[tuple[str, frozenset[Property]], ...]
    outputs: tuple[str, ...]
    inputs: tuple[str, ...]
    # the defining description, kept for sizes and reference solving
    spec: OperationSpec | None = field(default=None, compare=False, repr=False)

    def constraint(self, placeholder: str) -> frozenset[Property]:
        for p, props in self.constraints:
            if p == placeholder:
                return props
        raise KeyError(placeholder)

    def describe(self) -> str:
        outs = ", ".join(self.outputs)
        lhs = f"{{{outs}}}" if len(self.outputs) > 1 else outs
        return f"{lhs} = {self.name}({', '.join(self.inputs)})"


def learn_pattern(spec: OperationSpec) -> OperationPattern:
    """The pattern defined by an operation description."""
    return OperationPattern(
        name=spec.name,
        template_equations=tuple(spec.postcondition),
        constraints=tuple((op.name, op.properties) for op in spec.operands),
        outputs=tuple(op.name for op in spec.outputs),
        inputs=tuple(op.name for op in spec.inputs),
        spec=spec,
    )


@dataclass
class PatternRegistry:
    """Append-only library of learned patterns (builtin ones are implicit)."""

    patterns: list[OperationPattern] = field(default_factory=list)

    def register(self, pattern: OperationPattern) -> OperationPattern:
        for p in self.patterns:
            if p.name == pattern.name:
                if p != pattern:
                    raise PatternCollision(f"pattern {pattern.name!r} already registered with a different template")
                return p
        if pattern.name in {name for name, _ in BUILTIN_PATTERNS}:
            raise PatternCollision(f"pattern name {pattern.name!r} is reserved")
        self.patterns.append(pattern)
        return pattern

    def learn(self, spec: OperationSpec) -> OperationPattern:
        return self.register(learn_pattern(spec))

    def get(self, name: str) -> OperationPattern:
        for p in self.patterns:
            if p.name == name:
                return p
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(p.name == name for p in self.patterns)

    def __iter__(self):
        return iter(self.patterns)


class MatchKind(str, Enum):
    RECOGNIZED = "Recognized"
    ISOLATED = "Isolated"
    NO_MATCH = "NoMatch"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class MatchResult:
    kind: MatchKind
    equation: Equation | None = None
    pattern: str | None = None
    bindings: tuple[tuple[str, Expr], ...] = ()
    assumptions: tuple[str, ...] = ()
    reason: str = ""
    # sub-operands that may be inverted later, with the justification
    nonsingular: tuple[tuple[Ref, str], ...] = ()

    def __bool__(self) -> bool:
        return self.kind is not MatchKind.NO_MATCH


def _no_match(reason: str) -> MatchResult:
    return MatchResult(MatchKind.NO_MATCH, reason=reason)


# --------------------------------------------------------------------------
# splitting an equation into unknown and known parts


def split_known(eq: Equation, is_unknown) -> tuple[Expr, Expr]:
    """Return ``(U, K)`` with ``U`` the terms involving unknowns and ``lhs - rhs = U - K``."""
    if len(eq.lhs) != 1:
        raise ValueError("only implicit single-lhs equations can be split")
    res = normalize(Plus((eq.lhs[0], Neg(eq.rhs))))
    unknown, known = [], []
    for t in terms_of(res):
        (unknown if any(is_unknown(r) for r in operands_of(t)) else known).append(t)
    return normalize(Plus(tuple(unknown))), normalize(Neg(Plus(tuple(known))))


# --------------------------------------------------------------------------
# recognition of learned patterns


class _Matcher:
    def __init__(self, pattern: OperationPattern, known: frozenset[Ref], props: Mapping[Ref, frozenset[Property]]):
        self.pattern = pattern
        self.known = known
        self.props = props
        self.outputs = set(pattern.outputs)

    def is_known(self, e: Expr) -> bool:
        return all(r in self.known for r in operands_of(e))

    def bind(self, p: str, e: Expr, b: dict) -> Iterator[dict]:
        if p in b:
            if b[p] == e:
                yield b
            return
        need = self.pattern.constraint(p) & STRUCTURAL
        if p in self.outputs:
            if not isinstance(e, Ref) or e in self.known:
                return
            if e in [v for k, v in b.items() if k in self.outputs]:
                return
            if not need <= self.props.get(e, frozenset()):
                return
        else:
            if not self.is_known(e):
                return
            if need:
                if not isinstance(e, Ref) or not need <= self.props.get(e, frozenset()):
                    return
        yield {**b, p: e}

    def match(self, t: Expr, e: Expr, b: dict) -> Iterator[dict]:
        if isinstance(t, Ref):
            yield from self.bind(t.name, e, b)
            return
        if type(t) is not type(e):
            return
        if isinstance(t, (Neg, Transpose, Inverse)):
            yield from self.match(t.arg, e.arg, b)
        elif isinstance(t, Times):
            if len(t.factors) == len(e.factors):
                yield from self.match_seq(t.factors, e.factors, b)
        elif isinstance(t, Plus):
            if len(t.terms) == len(e.terms):
                for perm in itertools.permutations(e.terms):
                    yield from self.match_seq(t.terms, perm, b)
        elif t == e:
            yield b

    def match_seq(self, ts: Sequence[Expr], es: Sequence[Expr], b: dict) -> Iterator[dict]:
        if not ts:
            yield b
            return
        for b2 in self.match(ts[0], es[0], b):
            yield from self.match_seq(ts[1:], es[1:], b2)

    def match_equation(self, teq: Equation, eq: Equation, b: dict) -> Iterator[dict]:
        tu, tk = split_known(teq, lambda r: r.name in self.outputs)
        u, k = split_known(eq, lambda r: r not in self.known)
        for su, sk in ((u, k), (_negate(u), _negate(k))):
            for b2 in self.match(tu, su, b):
                yield from self.match(tk, sk, b2)


def _assumptions(pattern: OperationPattern, b: Mapping[str, Expr], props) -> list[str]:
    out = []
    for p in pattern.inputs:
        for prop in sorted_properties(pattern.constraint(p) & ASSUMABLE):
            e = b[p]
            have = props.get(e, frozenset()) if isinstance(e, Ref) else frozenset()
            if prop not in have:
                out.append(f"{prop}({to_text(e)})")
    return out


def _derived_nonsingular(pattern: OperationPattern, b: Mapping[str, Expr], props) -> list[tuple[Ref, str]]:
    """Triangular factors produced from an input with an LU factorization are nonsingular."""
    sources = [p for p in pattern.inputs if Property.EXISTS_LU in pattern.constraint(p)]
    if not sources:
        return []
    src = ", ".join(f"ExistsLU({to_text(b[p])})" for p in sources)
    out = []
    for p in pattern.outputs:
        r = b[p]
        if pattern.constraint(p) & TRIANGULAR and Property.NONSINGULAR not in props.get(r, frozenset()):
            out.append((r, f"NonSingular({to_text(r)}) follows from {src}"))
    return out


def match_pattern(
    pattern: OperationPattern,
    system: Sequence[Equation],
    known: frozenset[Ref],
    properties: Mapping[Ref, frozenset[Property]],
) -> MatchResult:
    if len(system) != len(pattern.template_equations):
        return _no_match(f"{pattern.name} needs {len(pattern.template_equations)} equation(s)")
    if any(len(eq.lhs) != 1 for eq in system):
        return _no_match("system is already in solved form")
    m = _Matcher(pattern, frozenset(known), properties)
    names = pattern.outputs + pattern.inputs
    # a canonical order makes the bindings independent of how the system is listed
    for perm in itertools.permutations(sorted(system, key=equation_sexpr)):
        found = _match_all(m, pattern.template_equations, perm, {})
        if found is None:
            continue
        if set(found) != set(names):
            continue
        outs = tuple(found[p] for p in pattern.outputs)
        args = tuple(found[p] for p in pattern.inputs)
        eq = Equation(outs, OpApply(pattern.name, args, len(outs)))
        return MatchResult(
            MatchKind.RECOGNIZED,
            equation=eq,
            pattern=pattern.name,
            bindings=tuple((p, found[p]) for p in names),
            assumptions=tuple(_assumptions(pattern, found, properties)),
            nonsingular=tuple(_derived_nonsingular(pattern, found, properties)),
        )
    return _no_match(f"no match for {pattern.name}")


def _match_all(m: _Matcher, teqs, eqs, b) -> dict | None:
    if not teqs:
        return b
    for b2 in m.match_equation(teqs[0], eqs[0], b):
        r = _match_all(m, teqs[1:], eqs[1:], b2)
        if r is not None:
            return r
    return None


def recognize(
    system: Sequence[Equation],
    known: frozenset[Ref],
    registry: PatternRegistry | Sequence[OperationPattern],
    properties: Mapping[Ref, frozenset[Property]] | None = None,
) -> MatchResult:
    """First learned pattern matching the whole system, in registry order."""
    props = properties or {}
    reasons = []
    for pattern in registry:
        r = match_pattern(pattern, system, known, props)
        if r:
            return r
        reasons.append(r.reason)
    return _no_match("; ".join(reasons) or "no learned patterns")


# --------------------------------------------------------------------------
# isolation


def _invertible(f: Expr, props, nonsingular: Mapping[Ref, str]) -> tuple[bool, str | None]:
    base = f.arg if isinstance(f, (Transpose, Inverse)) else f
    if isinstance(f, Inverse):
        return True, None
    if not isinstance(base, Ref):
        return False, None
    if Property.NONSINGULAR in props.get(base, frozenset()):
        return True, None
    if base in nonsingular:
        return True, nonsingular[base]
    return False, None


def isolate_unknown(
    eq: Equation,
    known: frozenset[Ref],
    properties: Mapping[Ref, frozenset[Property]] | None = None,
    nonsingular: Mapping[Ref, str] | None = None,
) -> MatchResult:
    """Solve ``eq`` for its single unknown sub-operand.

    Known factors around the unknown are inverted when they are nonsingular,
    either by property or by a recorded justification in ``nonsingular``.
    """
    props = properties or {}
    nonsingular = nonsingular or {}
    if len(eq.lhs) != 1:
        return _no_match("equation is already in solved form")
    res = normalize(Plus((eq.lhs[0], Neg(eq.rhs))))
    unknowns = sorted({r for r in operands_of(res) if r not in known}, key=to_text)
    if not unknowns:
        return _no_match("no unknown sub-operand")
    if len(unknowns) > 1:
        return _no_match("several unknowns: " + ", ".join(map(to_text, unknowns)))
    u = unknowns[0]
    occurrences = sum(1 for x in walk(res) if x == u)
    if occurrences > 1:
        return _no_match(f"{to_text(u)} occurs more than once")
    terms = terms_of(res)
    (t,) = [x for x in terms if u in operands_of(x)]
    rest = [x for x in terms if x is not t]
    negative = isinstance(t, Neg)
    core = t.arg if negative else t
    # core = target
    target = normalize(Plus(tuple(rest))) if negative else normalize(Neg(Plus(tuple(rest))))

    factors = core.factors if isinstance(core, Times) else (core,)
    idx = [i for i, f in enumerate(factors) if u in operands_of(f)][0]
    hit = factors[idx]
    if hit != u and hit != Transpose(u):
        return _no_match(f"{to_text(u)} cannot be isolated from {to_text(hit)}")
    left, right = factors[:idx], factors[idx + 1:]
    assumptions = []
    triangular = True
    for f in (*left, *right):
        ok, why = _invertible(f, props, nonsingular)
        if not ok:
            return _no_match(f"factor {to_text(f)} is not known to be nonsingular")
        if why:
            assumptions.append(why)
        base = f.arg if isinstance(f, (Transpose, Inverse)) else f
        if not (isinstance(f, Inverse) or props.get(base, frozenset()) & TRIANGULAR):
            triangular = False
    sol = Times((*[Inverse(f) for f in reversed(left)], target, *[Inverse(f) for f in reversed(right)]))
    if hit != u:
        sol = Transpose(sol)
    sol = normalize(sol)
    if not left and not right:
        name = "assign"
    else:
        name = "triangular-solve" if triangular else "solve"
    return MatchResult(
        MatchKind.ISOLATED,
        equation=Equation((u,), sol),
        pattern=name,
        assumptions=tuple(dict.fromkeys(assumptions)),
    )


# --------------------------------------------------------------------------
# template instantiation


def instantiate(pattern: OperationPattern, eq: Equation) -> list[Equation]:
    """Unfold ``{outs} = Op(args)`` into the pattern's defining equations."""
    if not isinstance(eq.rhs, OpApply) or eq.rhs.op != pattern.name:
        raise ValueError(f"not an application of {pattern.name}: {eq}")
    if len(eq.lhs) != len(pattern.outputs) or len(eq.rhs.args) != len(pattern.inputs):
        raise ValueError(f"arity mismatch for {pattern.name}: {eq}")
    bindings: dict[Ref, Expr] = {Ref(p): e for p, e in zip(pattern.outputs, eq.lhs)}
    bindings.update({Ref(p): e for p, e in zip(pattern.inputs, eq.rhs.args)})
    return [
        Equation(tuple(substitute(x, bindings) for x in t.lhs), substitute(t.rhs, bindings))
        for t in pattern.template_equations
    ]


def unfold(eqs: Sequence[Equation], registry: PatternRegistry) -> list[Equation]:
    """Replace every learned-operation application in ``eqs`` by its defining equations."""
    out = []
    for eq in eqs:
        if isinstance(eq.rhs, OpApply) and eq.rhs.op in registry:
            out.extend(instantiate(registry.get(eq.rhs.op), eq))
        else:
            out.append(eq)
    return out
