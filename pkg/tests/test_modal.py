import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibrelab.errors import FormulaSyntaxError, StructureError, UnreachableJump
from fibrelab.harness.generate import random_formula
from fibrelab.modal import (
    BOTTOM,
    IN,
    TOP,
    And,
    Box,
    ComponentId,
    FibredModel,
    KripkeComponent,
    Not,
    Prop,
    check_satisfaction,
    disjunction,
    modal_depth,
    parse_formula,
    print_formula,
    resolve_jump,
)


def test_parse_examples():
    assert parse_formula("(p1 & ~p2)") == And(Prop(1), Not(Prop(2)))
    assert parse_formula("[v3,2](p1 & T)") == Box(ComponentId("v3", 2), And(Prop(1), TOP))
    assert parse_formula("[r.0,in]~T") == Box(ComponentId("r.0", IN), BOTTOM)


@pytest.mark.parametrize("text", ["p0", "p3", "(p1 & p2", "[v,0]p1", "p1 p2", "", "~"])
def test_parse_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text, n=2)


def test_disjunction_encoding():
    assert disjunction([]) == BOTTOM
    assert disjunction([Prop(1)]) == Prop(1)
    assert disjunction([Prop(1), Prop(2)]) == Not(And(Not(Prop(1)), Not(Prop(2))))


def _two_components():
    i = ComponentId("r", IN)
    j = ComponentId("c", IN)
    ci = KripkeComponent(("a", "b"), frozenset({("a", "b")}), {"a": {1}, "b": set()})
    cj = KripkeComponent(("x", "y", "z"), frozenset({("x", "y"), ("x", "z")}), {"x": set(), "y": {1}, "z": {1}})
    M = FibredModel({i: ci, j: cj}, {(i, "a", j): "x", (i, "b", j): "y"}, {}, {"r": None, "c": "r"})
    return M, i, j


def test_satisfaction_clauses():
    M, i, j = _two_components()
    assert check_satisfaction(M, (i, "a"), Prop(1))
    assert not check_satisfaction(M, (i, "b"), Prop(1))
    # b has no successors: vacuous box
    assert check_satisfaction(M, (i, "b"), Box(i, BOTTOM))
    assert not check_satisfaction(M, (i, "a"), Box(i, Prop(1)))
    # jump a -> x, whose successors y and z both satisfy p1
    assert check_satisfaction(M, (i, "a"), Box(j, Prop(1)))
    # jump b -> y, which has no successors
    assert check_satisfaction(M, (i, "b"), Box(j, BOTTOM))
    with pytest.raises(StructureError):
        check_satisfaction(M, (j, "a"), TOP)


def test_resolve_jump_direct_and_unreachable():
    M, i, j = _two_components()
    assert resolve_jump(M, i, "a", j) == "x"
    with pytest.raises(UnreachableJump):
        resolve_jump(M, j, "x", i)


def test_sibling_subtrees_unreachable():
    r, s, t = (ComponentId(v, IN) for v in "rst")
    one = KripkeComponent(("w",), frozenset(), {})
    M = FibredModel(
        {r: KripkeComponent(("q",), frozenset(), {}), s: one, t: KripkeComponent(("u",), frozenset(), {})},
        {(r, "q", s): "w", (r, "q", t): "u"},
        {},
        {"r": None, "s": "r", "t": "r"},
    )
    with pytest.raises(UnreachableJump):
        resolve_jump(M, s, "w", t)


def test_world_disjointness_enforced():
    c = KripkeComponent(("w",), frozenset(), {})
    with pytest.raises(StructureError):
        FibredModel({ComponentId("a"): c, ComponentId("b"): c})


def _targets(ctx):
    return [ComponentId("r", IN), ComponentId("r.0", 1), ComponentId("x-y_z", 2)]


@settings(max_examples=300)
@given(st.integers(0, 2**32))
def test_print_parse_roundtrip(seed):
    rng = random.Random(seed)
    phi = random_formula(rng, 4, _targets, depth=rng.randint(0, 5), context=ComponentId("r", IN))
    assert parse_formula(print_formula(phi), n=4) == phi
    assert modal_depth(phi) <= 5
