import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmederive.expr import Ref, operands_of
from pmederive.opspec import parse_expr
from pmederive.tasks import (
    DecompositionError,
    DepKind,
    GraphCycleError,
    Task,
    build_graph,
    decompose,
    dependencies,
    levels,
    _Builder,
    to_dot,
)


def _task(tid, out, expr, quadrant="TL", group=None):
    e = parse_expr(expr)
    return Task(tid, (Ref(*out.split("_")),), tuple(sorted(operands_of(e), key=str)), e, quadrant, group)


def test_lu_tasks_and_graph(lu_derivation):
    (p,) = lu_derivation.pmes
    assert [t.text() for t in p.tasks] == [
        "{L_TL, U_TL} := LU(A_TL)",
        "U_TR := L_TL^-1 A_TR",
        "L_BL := A_BL U_TL^-1",
        "A_BR := A_BR - L_BL U_TR",
        "{L_BR, U_BR} := LU(A_BR)",
    ]
    assert p.tasks[3].in_place and not p.tasks[4].in_place
    assert [(a, b) for a, b, _ in p.graph.edges] == [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]
    assert p.graph.levels == ((1,), (2, 3), (4,), (5,))


def test_anti_dependency():
    tasks = [_task(1, "X_TL", "A_TL + D_TL"), _task(2, "A_TL", "B_TL + C_TL")]
    assert dependencies(tasks) == [(1, 2, DepKind.ANTI)]


def test_output_dependency():
    tasks = [_task(1, "A_TL", "B_TL + C_TL"), _task(2, "A_TL", "D_TL + E_TL")]
    assert dependencies(tasks) == [(1, 2, DepKind.OUTPUT)]


def test_true_dependency_across_quadrants_ignores_order():
    tasks = [_task(1, "X_TR", "Y_BL", "TR"), _task(2, "Y_BL", "C_BL", "BL")]
    assert dependencies(tasks) == [(2, 1, DepKind.TRUE)]


def test_commuting_updates_share_no_edges():
    tasks = [_task(1, "C_BR", "C_BR - A_BL X_TR", "BR", 1), _task(2, "C_BR", "C_BR - Y_BL B_TR", "BR", 1)]
    assert dependencies(tasks) == []


def test_cycle_is_reported():
    edges = [(1, 2, DepKind.TRUE), (2, 3, DepKind.TRUE), (3, 1, DepKind.ANTI)]
    with pytest.raises(GraphCycleError) as info:
        levels([1, 2, 3], edges)
    assert "3->1" in str(info.value)


def test_sylvester_commute_groups(sylv_derivation):
    p = sylv_derivation.pmes[2]
    assert p.graph.commute_groups() == {1: (8, 9), 2: (10, 11)}
    for ids in p.graph.commute_groups().values():
        assert not any(a in ids and b in ids for a, b, _ in p.graph.edges)


def test_update_needs_a_leading_operand():
    with pytest.raises(DecompositionError) as info:
        _Builder({"A"}).updates(parse_expr("L_BL U_TR"), "BR")
    assert info.value.subterm == parse_expr("L_BL U_TR")


def test_updates_prefer_an_input_operand(lu_derivation):
    pme = lu_derivation.pmes[0].pme
    assert decompose(pme)[3].text() == "A_BR := A_BR - L_BL U_TR"
    assert _Builder({"U"}).updates(parse_expr("A_BR + U_TR"), "BR") == Ref("U", "TR")
    assert _Builder({"A"}).updates(parse_expr("A_BR + U_TR"), "BR") == Ref("A", "BR")


def test_dot_output(lu_derivation):
    dot = to_dot(lu_derivation.pmes[0].graph, "LU")
    assert dot.startswith('digraph "LU" {')
    assert 't1 -> t2 [style=solid, kind="True"];' in dot
    assert "{ rank=same; t2; t3; }" in dot


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(1, n), st.integers(1, n))))))
def test_levels_respect_edges(case):
    n, pairs = case
    edges = [(a, b, DepKind.TRUE) for a, b in pairs if a < b]
    lv = levels(range(1, n + 1), edges)
    where = {i: k for k, lvl in enumerate(lv) for i in lvl}
    assert sorted(where) == list(range(1, n + 1))
    for a, b, _ in edges:
        assert where[a] < where[b]
    for i, k in where.items():
        if k:
            assert any(where[a] == k - 1 for a, b, _ in edges if b == i)


def test_build_graph_is_deterministic(lu_derivation):
    p = lu_derivation.pmes[0]
    assert build_graph(list(p.tasks)) == p.graph
