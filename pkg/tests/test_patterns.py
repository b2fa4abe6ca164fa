import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmederive.expr import Equation, Neg, Plus, Property, Ref, Times, Transpose, equations_equivalent
from pmederive.opspec import parse_equation, parse_spec
from pmederive.oracle import evaluate, exact, same
from pmederive.partition import enumerate_rule_sets, quadrant_properties
from pmederive.patterns import (
    MatchKind,
    PatternCollision,
    PatternRegistry,
    instantiate,
    isolate_unknown,
    learn_pattern,
    recognize,
    split_known,
    unfold,
)

from conftest import corpus_spec


@pytest.fixture
def lu_setup(lu_spec):
    reg = PatternRegistry()
    reg.learn(lu_spec)
    rs = enumerate_rule_sets(lu_spec)[0]
    return reg, quadrant_properties(lu_spec, rs)


def test_split_known_separates_unknown_terms():
    eq = parse_equation("L_BL U_TR + L_BR U_BR = A_BR")
    u, k = split_known(eq, lambda r: r.name in "LU" and r.quadrant == "BR")
    assert str(u) == "L_BR U_BR"
    assert str(k) == "A_BR - L_BL U_TR"


def test_recognizes_lu_in_the_bottom_right_cell(lu_setup):
    reg, props = lu_setup
    eq = parse_equation("L_BL U_TR + L_BR U_BR = A_BR")
    known = frozenset({Ref("L", "BL"), Ref("U", "TR"), Ref("A", "BR")})
    r = recognize([eq], known, reg, props)
    assert r.kind is MatchKind.RECOGNIZED and r.pattern == "LU"
    assert str(r.equation) == "{L_BR, U_BR} = LU(A_BR - L_BL U_TR)"
    assert r.assumptions == ("ExistsLU(A_BR - L_BL U_TR)",)


def test_known_existence_is_not_assumed(lu_setup):
    reg, props = lu_setup
    r = recognize([parse_equation("L_TL U_TL = A_TL")], frozenset({Ref("A", "TL")}), reg, props)
    assert r.assumptions == ()
    assert dict(r.nonsingular)[Ref("U", "TL")] == "NonSingular(U_TL) follows from ExistsLU(A_TL)"


def test_output_placeholders_need_structure(lu_setup):
    reg, props = lu_setup
    # L_BL is a general block: it cannot play the unit lower triangular factor
    eq = parse_equation("L_BL U_TL = A_BL")
    r = recognize([eq], frozenset({Ref("U", "TL"), Ref("A", "BL")}), reg, props)
    assert r.kind is MatchKind.NO_MATCH and r.reason


def test_inputs_must_be_known(lu_setup):
    reg, props = lu_setup
    eq = parse_equation("L_TL U_TL = A_TL")
    assert not recognize([eq], frozenset(), reg, props)


def test_sylvester_top_left_system(sylv_spec):
    reg = PatternRegistry()
    reg.learn(sylv_spec)
    rs = enumerate_rule_sets(sylv_spec)[2]
    props = quadrant_properties(sylv_spec, rs)
    system = [
        parse_equation("A_TL X_TL + Y_TL B_TL = C_TL"),
        parse_equation("D_TL X_TL + Y_TL E_TL = F_TL"),
    ]
    known = frozenset(r for r in props if r.name in "ABCDEF")
    r = recognize(list(reversed(system)), known, reg, props)
    assert str(r.equation) == "{X_TL, Y_TL} = Psi(A_TL, B_TL, C_TL, D_TL, E_TL, F_TL)"
    assert all(any(equations_equivalent(a, b) for b in system) for a in instantiate(reg.get("Psi"), r.equation))


@pytest.mark.parametrize(
    "text, known, expected, name",
    [
        ("L_TL U_TR = A_TR", {"L_TL", "A_TR"}, "U_TR = L_TL^-1 A_TR", "triangular-solve"),
        ("L_BL U_TL = A_BL", {"U_TL", "A_BL"}, "L_BL = A_BL U_TL^-1", "triangular-solve"),
        ("X_TR + Y_TL B_TR = C_TR", {"Y_TL", "B_TR", "C_TR"}, "X_TR = C_TR - Y_TL B_TR", "assign"),
        ("N X = C", {"N", "C"}, "X = N^-1 C", "solve"),
    ],
)
def test_isolation(text, known, expected, name):
    props = {
        Ref("L", "TL"): frozenset({Property.LOWER_TRIANGULAR, Property.UNIT_DIAGONAL, Property.NONSINGULAR}),
        Ref("N"): frozenset({Property.NONSINGULAR}),
    }
    nonsingular = {Ref("U", "TL"): "NonSingular(U_TL) follows from ExistsLU(A_TL)"}
    props[Ref("U", "TL")] = frozenset({Property.UPPER_TRIANGULAR})
    ks = frozenset(Ref(*k.split("_")) if "_" in k else Ref(k) for k in known)
    r = isolate_unknown(parse_equation(text), ks, props, nonsingular)
    assert r.kind is MatchKind.ISOLATED
    assert str(r.equation) == expected
    assert r.pattern == name


@pytest.mark.parametrize(
    "text, known, why",
    [
        ("A X + Y B = C", {"A", "B", "C"}, "several unknowns"),
        ("X + A X = C", {"A", "C"}, "occurs more than once"),
        ("G X = C", {"G", "C"}, "not known to be nonsingular"),
        ("A = B", {"A", "B"}, "no unknown"),
    ],
)
def test_isolation_failures_are_explained(text, known, why):
    r = isolate_unknown(parse_equation(text), frozenset(Ref(k) for k in known), {})
    assert not r and why in r.reason


NONSING = {Ref(n): frozenset({Property.NONSINGULAR}) for n in "PQR"}


@settings(max_examples=60, deadline=None)
@given(
    left=st.lists(st.sampled_from("PQR"), max_size=2),
    right=st.lists(st.sampled_from("PQR"), max_size=2),
    transposed=st.booleans(),
    sign=st.booleans(),
    seed=st.integers(0, 1000),
)
def test_isolation_is_numerically_sound(left, right, transposed, sign, seed):
    x = Transpose(Ref("X")) if transposed else Ref("X")
    core = Times((*map(Ref, left), x, *map(Ref, right))) if left or right else x
    lhs = Plus((Neg(core) if sign else core, Ref("K")))
    eq = Equation((lhs,), Ref("S"))
    r = isolate_unknown(eq, frozenset(map(Ref, "PQRKS")), NONSING)
    assert r
    rng = np.random.default_rng(seed)
    vals = {}
    for n in "PQRKS":
        m = exact(rng.integers(-3, 4, size=(3, 3)))
        if n in "PQR":
            for i in range(3):
                m[i, i] += 15
        vals[n] = m
    vals["X"] = evaluate(r.equation.rhs, lambda ref: vals[ref.name])
    look = lambda ref: vals[ref.name]  # noqa: E731
    assert same(evaluate(lhs, look), evaluate(Ref("S"), look))


def test_unfold_replaces_learned_applications(lu_setup):
    reg, _ = lu_setup
    eqs = [parse_equation("{L, U} = LU(A)"), parse_equation("X = Y")]
    assert [str(e) for e in unfold(eqs, reg)] == ["L U = A", "X = Y"]


def test_registry_rules(lu_spec):
    reg = PatternRegistry()
    p = reg.learn(lu_spec)
    assert reg.learn(lu_spec) is p
    assert "LU" in reg and list(reg) == [p]
    other = parse_spec(
        "operation LU { operand L : m x m [Output]; operand A : m x m [Input]; postcondition { L = A; } }"
    )
    with pytest.raises(PatternCollision):
        reg.learn(other)
    reserved = parse_spec(
        "operation assign { operand X : m x m [Output]; operand A : m x m [Input]; postcondition { X = A; } }"
    )
    with pytest.raises(PatternCollision):
        reg.learn(reserved)


def test_learned_pattern_describes_itself():
    assert learn_pattern(corpus_spec("coupled_sylvester")).describe() == "{X, Y} = Psi(A, B, C, D, E, F)"
