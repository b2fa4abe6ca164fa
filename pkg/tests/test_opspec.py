import pytest

from pmederive.expr import Property, Ref, Size
from pmederive.opspec import SpecError, parse_spec, render_spec

from conftest import corpus_spec

CORPUS = ("lu", "coupled_sylvester", "copy", "copy_scalar")


def _spec(operands: str, post: str = "X = A;") -> str:
    return f"operation T {{\n{operands}\n  postcondition {{ {post} }}\n}}\n"


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trips(name):
    spec = corpus_spec(name)
    again = parse_spec(render_spec(spec))
    assert again == spec
    assert render_spec(again) == render_spec(spec)


def test_lu_operands_and_closure(lu_spec):
    assert [op.name for op in lu_spec.operands] == ["L", "U", "A"]
    lo = lu_spec.operand("L")
    assert lo.rows == lo.cols == Size("m")
    assert {Property.OUTPUT, Property.LOWER_TRIANGULAR, Property.UNIT_DIAGONAL} <= lo.properties
    assert Property.MATRIX in lo.properties
    assert [o.name for o in lu_spec.outputs] == ["L", "U"]
    assert [str(e) for e in lu_spec.postcondition] == ["L U = A"]


def test_sylvester_declaration_order(sylv_spec):
    assert [op.name for op in sylv_spec.operands] == list("ABCDEFXY")
    assert len(sylv_spec.postcondition) == 2


def test_comments_and_whitespace_are_ignored():
    text = _spec("  operand X : m x n [Output]; # the result\n  operand A : m x n [Input];")
    assert parse_spec(text).name == "T"


@pytest.mark.parametrize(
    "operands, post, code",
    [
        ("operand X : m x n [Output];\noperand A : m x n [Input, Shiny];", "X = A;", "E101"),
        ("operand X : m x n [Output];\noperand A : m x n [Input];", "X = B;", "E102"),
        ("operand X : m x n [Output];\noperand A : n x m [Input];", "X = A;", "E103"),
        ("operand X : m x n [Output];\noperand A : m x n [Input];", "", "E104"),
        ("operand X : m x n [Input];\noperand A : m x n [Input];", "X = A;", "E105"),
        ("operand X : m x n [Output];\noperand A : m x n [Output];", "X = A;", "E106"),
        ("operand X : m x n [Output];\noperand A : m x n [Input];\noperand B : m x n [Input];", "X = A; A = B;", "E107"),
        ("operand X : m x n [Output];\noperand X : m x n [Input];", "X = X;", "E108"),
        ("operand X : m x n [Output, Input];\noperand A : m x n [Input];", "X = A;", "E109"),
        ("operand X : m x n [Output];\noperand A : m x n [Input, Zero, Identity];", "X = A;", "E110"),
        ("operand X : m x n [Output];\noperand A : m x n [Input, LowerTriangular];", "X = A;", "E111"),
        ("operand X : m x n [Output];\noperand A : m x n [Input, Scalar];", "X = A;", "E112"),
        ("operand X [Output];\noperand A : m x n [Input];", "X = A;", "E113"),
        ("operand X : m x n [Output]\noperand A : m x n [Input];", "X = A;", "E100"),
    ],
)
def test_diagnostics_carry_codes_and_positions(operands, post, code):
    with pytest.raises(SpecError) as info:
        parse_spec(_spec(operands, post), "t.clk")
    err = info.value
    assert err.code == code
    assert err.line >= 1 and err.col >= 1
    assert err.diagnostic().startswith(f"t.clk:{err.line}:{err.col}: {code}: ")


def test_unexpected_character_points_at_it():
    with pytest.raises(SpecError) as info:
        parse_spec("operation T {\n  operand X : m x n [Output] $;\n}")
    assert (info.value.code, info.value.line, info.value.col) == ("E100", 2, 30)


def test_postcondition_is_normalized():
    spec = parse_spec(_spec("operand X : m x n [Output];\noperand A : m x n [Input];", "X = A - A + A;"))
    assert str(spec.postcondition[0]) == "X = A"
    assert spec.postcondition[0].lhs == (Ref("X"),)


def test_symmetric_is_rejected_with_a_reason():
    with pytest.raises(SpecError) as info:
        parse_spec(_spec("operand X : m x m [Output];\noperand A : m x m [Input, Symmetric];"))
    assert info.value.code == "E101"
    assert "'Symmetric' is not supported" in info.value.message
