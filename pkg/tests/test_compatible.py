import dataclasses
import random

import pytest

from builders import net, vec
from fibrelab.compatible import (
    WorldVectorMap,
    build_compatible,
    check_admissible,
    check_compatibility,
    cube_points,
    transport_iso,
)
from fibrelab.errors import GuardExceeded, RuleDomainError, StructureError
from fibrelab.feedforward import LayerSpan, constant_instance, identity_instance
from fibrelab.fibred import EdgeLabel, FibredNetwork, FibringArchitecture, TableRule
from fibrelab.harness.generate import InstanceGenConfig, case_rng, random_fibred, random_formula
from fibrelab.modal import IN, ComponentId, FibredModel, KripkeComponent, check_satisfaction

C = ComponentId("v", IN)


def _pi(*vectors):
    return WorldVectorMap(C, {f"w{i}": v for i, v in enumerate(vectors)})


def _comp(n, rel):
    return KripkeComponent(tuple(f"w{i}" for i in range(n)), frozenset(rel), {})


def test_admissible_complete_relation_constant_net():
    m = _comp(2, {(a, b) for a in ("w0", "w1") for b in ("w0", "w1")})
    assert check_admissible(m, constant_instance(1, vec(3)), LayerSpan(0, 1), _pi(vec(0), vec(1)))


def test_admissible_empty_relation_fails():
    m = _comp(1, set())
    assert not check_admissible(m, constant_instance(1, vec(3)), LayerSpan(0, 1), _pi(vec(0)))


def test_admissible_identity_diagonal():
    m = _comp(2, {("w0", "w0"), ("w1", "w1")})
    assert check_admissible(m, identity_instance(1), LayerSpan(0, 1), _pi(vec(0), vec(1)))


def _single(inst):
    return FibredNetwork(inst, FibringArchitecture("r", {"r": inst.architecture}, {}), {})


def test_single_node_constant_zero():
    Cm = build_compatible(_single(constant_instance(1, vec(0))), vec(1))
    comp = Cm.model.components[ComponentId("r", IN)]
    assert len(comp.worlds) == 2
    assert len(comp.relation) == 4
    w0, w1 = Cm.maps[ComponentId("r", IN)].world_of(vec(0)), Cm.maps[ComponentId("r", IN)].world_of(vec(1))
    assert comp.valuation[w0] == frozenset() and comp.valuation[w1] == {1}
    assert Cm.root_world("r") == w1


def test_single_node_distinguishing_net():
    Cm = build_compatible(_single(identity_instance(1)), vec(0))
    comp = Cm.model.components[ComponentId("r", IN)]
    assert comp.relation == {(w, w) for w in comp.worlds}


def test_missing_table_key_raises_with_source():
    root = net((1, 1, 1), [[[1]], [[1]]], [[0], [0]])
    leaf = identity_instance(1)
    arch = FibringArchitecture("r", {"r": root.architecture, "c": leaf.architecture}, {("r", "c"): EdgeLabel(1, (0,))})
    fnet = FibredNetwork(root, arch, {("r", "c"): TableRule({vec(0): (leaf, vec(5))})})
    with pytest.raises(RuleDomainError) as err:
        build_compatible(fnet, vec(0))
    assert err.value.vector == vec(1) and err.value.source == vec(1)


def test_cube_guard(monkeypatch):
    with pytest.raises(GuardExceeded):
        cube_points(17)
    monkeypatch.setenv("FIBRELAB_MAX_CUBE", "2")
    with pytest.raises(GuardExceeded):
        cube_points(3)
    assert len(cube_points(3, max_bits=3)) == 8


def _generated(i=1):
    rng = case_rng(0, "fibred", i)
    fnet = random_fibred(rng, InstanceGenConfig())
    x = cube_points(fnet.input_dim)[-1]
    return fnet, x, build_compatible(fnet, x)


@pytest.mark.parametrize("i", range(8))
def test_builder_output_is_compatible(i):
    fnet, x, Cm = _generated(i)
    rep = check_compatibility(Cm, fnet, x)
    assert rep.ok, rep.failures


def test_flipped_root_bit_breaks_c0():
    fnet, x, Cm = _generated()
    root_in = ComponentId("r", IN)
    comp = Cm.model.components[root_in]
    w = comp.worlds[0]
    val = dict(comp.valuation)
    val[w] = val[w] ^ {1}
    comps = dict(Cm.model.components)
    comps[root_in] = KripkeComponent(comp.worlds, comp.relation, val)
    M = FibredModel(comps, Cm.model.jumps, Cm.model.provenance, Cm.model.parents)
    rep = check_compatibility(dataclasses.replace(Cm, model=M), fnet, x)
    bad = [r for r in rep.failures if r.condition == "C0"]
    assert bad and bad[0].witness["world"] == w


def test_removed_relation_edge_breaks_c1():
    fnet, x, Cm = _generated()
    root_in = ComponentId("r", IN)
    comp = Cm.model.components[root_in]
    pair = sorted(comp.relation)[0]
    comps = dict(Cm.model.components)
    comps[root_in] = KripkeComponent(comp.worlds, comp.relation - {pair}, comp.valuation)
    M = FibredModel(comps, Cm.model.jumps, Cm.model.provenance, Cm.model.parents)
    rep = check_compatibility(dataclasses.replace(Cm, model=M), fnet, x)
    bad = [r for r in rep.failures if r.condition == "C1" and r.scope == str(root_in)]
    assert bad and set(bad[0].witness["worlds"]) == set(pair)


def test_transport_identity_is_structural_noop():
    fnet, x, Cm = _generated()
    root_in = ComponentId("r", IN)
    T = transport_iso(Cm, root_in, {w: w for w in Cm.model.components[root_in].worlds})
    assert T.model.components == Cm.model.components
    assert T.model.jumps == Cm.model.jumps
    assert T.maps[root_in].to_vector == Cm.maps[root_in].to_vector


def test_transport_swap_preserves_truth():
    fnet, x, Cm = _generated(2)
    root_in = ComponentId("r", IN)
    a, b = Cm.model.components[root_in].worlds[:2]
    T = transport_iso(Cm, root_in, {**{w: w for w in Cm.model.components[root_in].worlds}, a: b, b: a})
    assert check_compatibility(T, fnet, x).ok
    rng = random.Random(7)
    nonempty = [c for c, k in Cm.model.components.items() if k.worlds]
    for _ in range(40):
        phi = random_formula(rng, fnet.input_dim, lambda ctx: [c for c in nonempty if c.node.startswith(ctx.node)],
                             depth=3, context=root_in)
        for w in (a, b):
            other = b if w == a else a
            assert check_satisfaction(Cm.model, (root_in, w), phi) == check_satisfaction(T.model, (root_in, other), phi)


def test_transport_rejects_bad_relabels():
    fnet, x, Cm = _generated()
    root_in = ComponentId("r", IN)
    ws = Cm.model.components[root_in].worlds
    with pytest.raises(StructureError):
        transport_iso(Cm, root_in, {w: "same" for w in ws})
    other = next(c for c in Cm.model.components if c != root_in and Cm.model.components[c].worlds)
    clash = Cm.model.components[other].worlds[0]
    with pytest.raises(StructureError):
        transport_iso(Cm, root_in, {**{w: w for w in ws}, ws[0]: clash})


def test_shifted_cube_builder():
    inst = identity_instance(1)
    Cm = build_compatible(_single(inst), (vec(1)[0] / 3 + 1,), offset=(vec(1)[0] / 3,))
    comp = Cm.model.components[ComponentId("r", IN)]
    assert sorted(map(sorted, comp.valuation.values())) == [[], [1]]
    rep = check_compatibility(Cm, _single(inst), Cm.x)
    assert rep.ok
