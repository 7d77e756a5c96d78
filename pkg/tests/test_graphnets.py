import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import mat, vec
from fibrelab.errors import ShapeError, StructureError
from fibrelab.graphnets import (
    FeaturedGraph,
    GatInstance,
    GnnInstance,
    TokenSequence,
    classify_node,
    classify_token,
    gat_attention_coeffs,
    gat_forward,
    gnn_forward,
    transformer_forward,
)
from fibrelab.harness.generate import InstanceGenConfig, random_gnn, random_graph

PATH = FeaturedGraph.build(["a", "b"], [("a", "b")], {"a": [1], "b": [0]})
ONE = GnnInstance([mat([[1]])], [mat([[1]])], [[0]])


def test_gnn_path_hand_values():
    res = gnn_forward(ONE, PATH)
    assert res.h[1] == {"a": vec(1), "b": vec(1)}
    assert res.x[1] == {"a": vec(1), "b": vec(1)}


def test_isolated_node_and_zero_aggregation():
    g = FeaturedGraph.build(["u"], [], {"u": [1]})
    inst = GnnInstance([mat([[3]])], [mat([[2]])], [[-1]])
    assert gnn_forward(inst, g).final_h("u") == vec(1)
    zero_a = GnnInstance([mat([[0]])], [mat([[2]])], [[-1]])
    linked = FeaturedGraph.build(["u", "w"], [("u", "w")], {"u": [1], "w": [1]})
    unlinked = FeaturedGraph.build(["u", "w"], [], {"u": [1], "w": [1]})
    assert gnn_forward(zero_a, linked).h == gnn_forward(zero_a, unlinked).h


def test_attention_examples():
    g = FeaturedGraph.build(["u", "v", "w"], [("u", "v"), ("u", "w")], {k: [1] for k in "uvw"})
    flat = GatInstance([mat([[1]])], [mat([[1]])], [[0]], [[0, 0]])
    x = {k: vec(1) for k in "uvw"}
    assert gat_attention_coeffs(flat, 1, "u", x, g) == {k: F(1, 3) for k in "uvw"}
    iso = FeaturedGraph.build(["u"], [], {"u": [1]})
    assert gat_attention_coeffs(flat, 1, "u", {"u": vec(1)}, iso) == {"u": 1}
    # self score 3 (A x_u = 3), neighbour score 5 (A x_v = 5)
    pair = FeaturedGraph.build(["u", "v"], [("u", "v")], {"u": [3], "v": [5]})
    inst = GatInstance([mat([[1]])], [mat([[1]])], [[0]], [[1, 0]])
    assert gat_attention_coeffs(inst, 1, "u", {"u": vec(3), "v": vec(5)}, pair) == {"u": 0, "v": 1}


def test_gat_zero_attention_closed_form():
    rng = random.Random(3)
    cfg = InstanceGenConfig()
    for _ in range(50):
        gnn = random_gnn(rng, cfg, layers=1)
        gat = GatInstance(gnn.A, gnn.B, gnn.b, [(0,) * (2 * gnn.dims[1])])
        g = random_graph(rng, cfg, gnn.dims[0])
        hg, ha = gnn_forward(gnn, g).h[1], gat_forward(gat, g).h[1]
        for u in g.nodes:
            k = g.degree(u) + 1
            assert ha[u] == tuple((a - b) / k + b for a, b in zip(hg[u], gnn.b[0]))


def test_gat_without_edges_is_b_only_chain():
    rng = random.Random(4)
    cfg = InstanceGenConfig(edge_prob=0.0)
    gat = random_gnn(rng, cfg, attention=True, layers=2)
    g = random_graph(rng, cfg, gat.dims[0])
    res = gat_forward(gat, g)
    for u in g.nodes:
        x = g.features[u]
        for l in range(2):
            h = tuple(a + b for a, b in zip(gat.B[l].matvec(x), gat.b[l]))
            x = tuple(min(max(c, 0), 1) for c in h)
        assert res.final_h(u) == h


def test_transformer_single_token_and_symmetry():
    inst = GatInstance([mat([[1]])], [mat([[2]])], [[F(-1, 2)]], [[1, -1]])
    seq = TokenSequence(("a",), {"a": [1]})
    iso = FeaturedGraph.build(["0"], [], {"0": [1]})  # pos(0, 1) = 0
    assert transformer_forward(inst, seq).h == gat_forward(inst, iso).h
    same = TokenSequence(("a", "a", "a"), {"a": [1]}, pos_fn=lambda t, s, d: (0,) * d)
    out = transformer_forward(inst, same).final_h
    assert out("0") == out("1") == out("2")


def test_transformer_two_tokens_against_k2():
    inst = GatInstance([mat([[1]])], [mat([[1]])], [[0]], [[1, 0]])
    seq = TokenSequence(("a", "b"), {"a": [0], "b": [1]})
    k2 = FeaturedGraph.build(["0", "1"], [("0", "1")], {"0": [0], "1": [1 + F(1, 3)]})
    assert transformer_forward(inst, seq).h == gat_forward(inst, k2).h
    # token 0 attends to token 1 (higher A x), so h = A x_1 = 4/3
    assert transformer_forward(inst, seq).final_h("0") == (F(4, 3),)


@pytest.mark.parametrize("bias,expected", [(F(1, 3), True), (F(0), False), (F(-5), False)])
def test_classify_node_boundary(bias, expected):
    inst = GnnInstance([mat([[0]])], [mat([[0]])], [[bias]])
    assert classify_node(inst, PATH, "a") is expected
    gat = GatInstance([mat([[0]])], [mat([[0]])], [[bias]], [[0, 0]])
    assert classify_token(gat, TokenSequence(("x",), {"x": [0]}), 0) is expected


def test_graph_validation():
    with pytest.raises(StructureError):
        FeaturedGraph.build(["a"], [("a", "a")], {"a": [0]})
    with pytest.raises(StructureError):
        FeaturedGraph.build(["a"], [("a", "b")], {"a": [0]})
    with pytest.raises(ShapeError):
        GnnInstance([mat([[1]])], [mat([[1, 0]])], [[0]])
    with pytest.raises(ShapeError):
        GatInstance([mat([[1]])], [mat([[1]])], [[0]], [[0]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_invariants_random(seed):
    rng = random.Random(seed)
    cfg = InstanceGenConfig()
    gat = random_gnn(rng, cfg, attention=True)
    g = random_graph(rng, cfg, gat.dims[0])
    res = gat_forward(gat, g)
    for l in range(1, gat.depth + 1):
        for u in g.nodes:
            alpha = gat_attention_coeffs(gat, l, u, res.x[l - 1], g)
            assert sum(alpha.values()) == 1
            assert all(0 <= c <= 1 for c in res.x[l][u])
    # relabelling nodes permutes outputs
    perm = {v: f"n{len(g.nodes) - i}" for i, v in enumerate(g.nodes)}
    h = FeaturedGraph.build([perm[v] for v in g.nodes], [tuple(perm[v] for v in e) for e in g.edges],
                            {perm[v]: f for v, f in g.features.items()})
    for fwd in (gat_forward, gnn_forward):
        a, b = fwd(gat, g), fwd(gat, h)
        assert all(a.final_h(v) == b.final_h(perm[v]) for v in g.nodes)
