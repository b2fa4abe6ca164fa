import pytest

from pmederive.expr import Property
from pmederive.invariants import generate_invariants
from pmederive.opspec import parse_spec
from pmederive.oracle import check_derivation, random_instance
from pmederive.patterns import MatchKind, PatternRegistry
from pmederive.pme import DerivationStuck, derive_pme, derive_pmes
from pmederive.partition import enumerate_rule_sets

from conftest import corpus_spec

TRSM = """
operation Trsm {
  operand L : m x m [Input, LowerTriangular, NonSingular];
  operand B : m x n [Input];
  operand X : m x n [Output];
  postcondition { L X = B; }
}
"""
SQUARE = "operation Sq { operand X : m x m [Output]; operand A : m x m [Input]; postcondition { X X = A; } }"


def _cells(pme):
    return {c.quadrant: [str(e) for e in c.equations] for c in pme.cells}


def test_lu_pme(lu_spec):
    (pme,) = derive_pmes(lu_spec)
    assert _cells(pme) == {
        "TL": ["{L_TL, U_TL} = LU(A_TL)"],
        "TR": ["U_TR = L_TL^-1 A_TR"],
        "BL": ["L_BL = A_BL U_TL^-1"],
        "BR": ["{L_BR, U_BR} = LU(A_BR - L_BL U_TR)"],
    }
    kinds = {c.quadrant: [s.kind for s in c.solved] for c in pme.cells}
    assert kinds["TL"] == [MatchKind.RECOGNIZED] and kinds["TR"] == [MatchKind.ISOLATED]
    assert pme.solve_order[0] == "TL" and pme.solve_order[-1] == "BR"
    assert pme.assumptions == (
        "NonSingular(U_TL) follows from ExistsLU(A_TL)",
        "ExistsLU(A_BR - L_BL U_TR)",
    )


def test_every_output_quadrant_is_computed_once(sylv_spec):
    for pme in derive_pmes(sylv_spec):
        outs = [r for c in pme.cells for r in c.outputs]
        assert len(outs) == len(set(outs))
        props = {r.name for r in outs}
        assert props == {"X", "Y"}


def test_copy_prefers_the_learned_pattern():
    pmes = derive_pmes(corpus_spec("copy"))
    assert len(pmes) == 3
    assert _cells(pmes[2])["TR"] == ["X_TR = Copy(A_TR)"]


def test_triangular_solve_operation_derives_and_checks():
    spec = parse_spec(TRSM)
    d = generate_invariants(spec)
    assert len(d.pmes) == len(enumerate_rule_sets(spec)) == 3
    two_by_one = next(p for p in d.pmes if p.pme.shape == (2, 1))
    assert _cells(two_by_one.pme) == {"T": ["X_T = Trsm(L_TL, B_T)"], "B": ["X_B = Trsm(L_BR, B_B - L_BL X_T)"]}
    for seed in range(3):
        report = check_derivation(d, random_instance(spec, {"m": 3, "n": 2}, seed=seed))
        assert report.passed, report.failures[:3]


def test_stuck_derivation_names_every_pending_cell():
    spec = parse_spec(SQUARE)
    (rs,) = enumerate_rule_sets(spec)
    reg = PatternRegistry()
    reg.learn(spec)
    with pytest.raises(DerivationStuck) as info:
        derive_pme(spec, rs, reg)
    assert set(info.value.pending) == {"TL", "TR", "BL", "BR"}
    assert "several unknowns" in str(info.value)
    diags = []
    assert derive_pmes(spec, diagnostics=diags) == [] and len(diags) == 1


def test_scalar_operation_has_no_pme():
    diags = []
    assert derive_pmes(corpus_spec("copy_scalar"), diagnostics=diags) == []
    assert "no admissible rule set" in diags[0]


def test_quadrant_structure_is_used(lu_spec):
    rs = enumerate_rule_sets(lu_spec)[0]
    assert Property.ZERO in rs.rule("L").properties("TR")
    assert Property.ZERO in rs.rule("U").properties("BL")
