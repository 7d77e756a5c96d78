"""Compile a GNN / GAT / Transformer encoder at a fixed (graph, node) into a
fibred network whose architecture is the lazy unravelling of the node.

Node templates (``k = deg + 1`` walk children, one block each):

* GNN root:   splice layer ``k*d_{t-1}`` (identity) -> ``[B | A ... A] + b``.
* GNN inner:  the same, then truncated ReLU and an identity output layer, so
  the node hands ``x^t`` (not ``h^t``) to its parent.
* GAT root:   splice layer (identity) -> block layer
  ``[B x_v | A x_v | A x_w1 | ...]`` (identity) -> projection onto the first
  block.  An attention leaf is fibred on the first block of the block layer
  and overwrites it with the hard-attention sum plus bias.
* GAT inner:  as the root, then truncated ReLU and an identity output layer.
* Leaves at depth L return the hard-coded feature of their walk endpoint.

Only the leaf rules depend on the node features; everything else is fixed
by (network, graph, node).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from fibrelab.errors import ShapeError, StructureError
from fibrelab.feedforward import NetworkInstance, NeuralArchitecture, identity_instance
from fibrelab.fibred import ConstantRule, EdgeLabel, FibredNetwork, FibringArchitecture, SelfFibreRule
from fibrelab.graphnets import FeaturedGraph, GatInstance, GnnInstance, TokenSequence
from fibrelab.linalg import (
    ActivationSpec,
    AttentionCombine,
    Identity,
    RMatrix,
    RVector,
    TruncatedReLU,
    block_matrix,
    hstack,
    vector,
    vstack,
    zeros,
)

GNN, GAT, TRANSFORMER = "gnn", "gat", "transformer"
MODES = (GNN, GAT, TRANSFORMER)

_VERTEX_NAME = re.compile(r"^[A-Za-z0-9_\-]+$")
ATTENTION_SUFFIX = "@"


@dataclass(frozen=True)
class UnravelTree:
    """Lazy unravelling of ``root_vertex`` up to ``depth``.

    ``walks`` maps tree node ids to their lazy walk; attention leaves map to
    ``None``.  ``children`` lists walk children (self step first, then
    neighbours in sorted order) followed by the attention child, if any.
    """

    root_vertex: str
    depth: int
    mode: str
    walks: Mapping[str, tuple | None]
    children: Mapping[str, tuple]
    attention: Mapping[str, str]

    __hash__ = None

    @property
    def root(self) -> str:
        return self.root_vertex

    def vertex(self, node: str) -> str:
        walk = self.walks[node]
        if walk is None:
            raise KeyError(f"{node!r} is an attention node")
        return walk[-1]

    def walk_depth(self, node: str) -> int:
        return len(self.walks[node]) - 1

    def walk_children(self, node: str) -> tuple:
        att = self.attention.get(node)
        return tuple(c for c in self.children[node] if c != att)

    def __len__(self):
        return len(self.walks)


def lazy_unravel(graph: FeaturedGraph, u: str, depth: int, mode: str = GNN) -> UnravelTree:
    u = str(u)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if u not in graph.nodes:
        raise StructureError(f"unknown node {u!r}")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    bad = [v for v in graph.nodes if not _VERTEX_NAME.match(v)]
    if bad:
        raise StructureError(f"vertex names must match {_VERTEX_NAME.pattern}: {bad}")
    walks: dict = {u: (u,)}
    children: dict = {}
    attention: dict = {}
    frontier = [u]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            v = walks[node][-1]
            kids = []
            for w in (v,) + graph.neighbors(v):
                cid = f"{node}/{w}"
                walks[cid] = walks[node] + (w,)
                kids.append(cid)
                nxt.append(cid)
            if mode != GNN:
                att = f"{node}/{ATTENTION_SUFFIX}"
                walks[att] = None
                children[att] = ()
                attention[node] = att
                kids.append(att)
            children[node] = tuple(kids)
        frontier = nxt
    for node in frontier:
        children[node] = ()
    return UnravelTree(u, depth, mode, walks, children, attention)


# ---------------------------------------------------------------------------
# node templates


def _stacked(copies: int, rows: int, cols: int) -> RMatrix:
    block = RMatrix.identity(rows) if rows == cols else RMatrix.zeros(rows, cols)
    return vstack([block] * copies)


def _projection(d: int, total: int) -> RMatrix:
    return hstack([RMatrix.identity(d), RMatrix.zeros(d, total - d)]) if total > d else RMatrix.identity(d)


def _walk_node_instance(inst: GnnInstance, t: int, deg: int, in_dim: int, is_root: bool, attention: bool) -> NetworkInstance:
    d = inst.dims
    k = deg + 1
    splice = k * d[t - 1]
    A, B, b = inst.A[t - 1], inst.B[t - 1], inst.b[t - 1]
    dims = [in_dim, splice]
    acts = []
    weights = [_stacked(k, d[t - 1], in_dim)]
    biases = [zeros(splice)]
    if attention:
        width = (deg + 2) * d[t]
        blocks = [[B] + [None] * deg]
        for j in range(k):
            blocks.append([A if jj == j else None for jj in range(k)])
        dims += [width, d[t]]
        acts += [ActivationSpec.uniform(splice, Identity()), ActivationSpec.uniform(width, Identity())]
        weights += [block_matrix(blocks, [d[t]] * (deg + 2), [d[t - 1]] * k), _projection(d[t], width)]
        biases += [zeros(width), zeros(d[t])]
    else:
        dims += [d[t]]
        acts += [ActivationSpec.uniform(splice, Identity())]
        weights += [hstack([B] + [A] * deg)]
        biases += [tuple(b)]
    if not is_root:
        acts.append(ActivationSpec.uniform(d[t], TruncatedReLU()))
        dims.append(d[t])
        weights.append(RMatrix.identity(d[t]))
        biases.append(zeros(d[t]))
    return NetworkInstance(NeuralArchitecture(tuple(dims), tuple(acts)), tuple(weights), tuple(biases))


def _attention_instance(inst: GatInstance, t: int, deg: int) -> NetworkInstance:
    d = inst.dims[t]
    width = (deg + 2) * d
    comb = AttentionCombine(deg + 2, d, tuple(inst.a[t - 1]), tuple(inst.b[t - 1]))
    arch = NeuralArchitecture((width, width, d), (ActivationSpec(((width, comb),)),))
    return NetworkInstance(arch, (RMatrix.identity(width), _projection(d, width)), (zeros(width), zeros(d)))


@dataclass(frozen=True)
class CompiledFibring:
    network: GnnInstance
    graph: FeaturedGraph
    vertex: str
    mode: str
    tree: UnravelTree
    root_instance: NetworkInstance
    architecture: FibringArchitecture
    fixed_rules: Mapping[tuple, object]  # feature-independent rules
    leaf_edges: Mapping[tuple, str]  # edge -> graph vertex whose feature it injects
    offset: RVector | None = None  # shifted input cube for Transformer mode

    __hash__ = None

    def rules_for(self, features: Mapping[str, Sequence]) -> dict:
        """The fibring rules for one assignment of node features."""
        feats = {str(v): vector(f) for v, f in features.items()}
        d0 = self.network.dims[0]
        rules = dict(self.fixed_rules)
        ident = identity_instance(d0)
        for edge, v in self.leaf_edges.items():
            if len(feats[v]) != d0:
                raise ShapeError(f"feature of {v!r} has dim {len(feats[v])}, expected {d0}")
            rules[edge] = ConstantRule(ident, feats[v])
        return rules

    def fibred(self, features: Mapping[str, Sequence]) -> FibredNetwork:
        return FibredNetwork(self.root_instance, self.architecture, self.rules_for(features))

    def root_input(self, features: Mapping[str, Sequence]) -> RVector:
        return vector(features[self.vertex])

    @property
    def input_dim(self) -> int:
        return self.network.dims[0]


def compile_network(inst: GnnInstance, graph: FeaturedGraph, u: str, mode: str | None = None) -> CompiledFibring:
    """Build the unravelling fibred network of ``inst`` at node ``u``."""
    if mode is None:
        mode = GAT if isinstance(inst, GatInstance) else GNN
    if mode != GNN and not isinstance(inst, GatInstance):
        raise ShapeError(f"{mode} mode needs attention vectors")
    if graph.feature_dim and graph.feature_dim != inst.dims[0]:
        raise ShapeError(f"graph features have dim {graph.feature_dim}, network expects {inst.dims[0]}")
    attention = mode != GNN
    L = inst.depth
    d = inst.dims
    tree = lazy_unravel(graph, u, L, mode)
    node_arch: dict = {}
    edges: dict = {}
    fixed: dict = {}
    leaf_edges: dict = {}
    templates: dict = {}

    def template(node: str) -> NetworkInstance:
        delta = tree.walk_depth(node)
        t = L - delta
        v = tree.vertex(node)
        in_dim = d[0] if delta == 0 else d[t - 1]
        return _walk_node_instance(inst, t, graph.degree(v), in_dim, delta == 0, attention)

    for node, walk in tree.walks.items():
        if walk is None:
            continue
        delta = len(walk) - 1
        if delta == L:
            node_arch[node] = identity_instance(d[0]).architecture
            continue
        templates[node] = template(node)
        node_arch[node] = templates[node].architecture
        t = L - delta
        for j, child in enumerate(tree.walk_children(node)):
            edges[(node, child)] = EdgeLabel(1, tuple(range(j * d[t - 1], (j + 1) * d[t - 1])))
        att = tree.attention.get(node)
        if att is not None:
            ai = _attention_instance(inst, t, graph.degree(tree.vertex(node)))
            node_arch[att] = ai.architecture
            edges[(node, att)] = EdgeLabel(2, tuple(range(d[t])))
            fixed[(node, att)] = SelfFibreRule(ai)

    for node, walk in tree.walks.items():
        if walk is None or len(walk) == 1:
            continue
        parent = node.rsplit("/", 1)[0]
        if len(walk) - 1 == L:
            leaf_edges[(parent, node)] = walk[-1]
        else:
            t_child = L - (len(walk) - 1)
            fixed[(parent, node)] = ConstantRule(templates[node], zeros(d[t_child - 1]))

    root = tree.root
    root_instance = templates[root] if L > 0 else identity_instance(d[0])
    arch = FibringArchitecture(root, node_arch, edges)
    return CompiledFibring(inst, graph, str(u), mode, tree, root_instance, arch, fixed, leaf_edges)


def compile_transformer(inst: GatInstance, seq: TokenSequence, position: int) -> CompiledFibring:
    """Compile at token ``position``; the root input cube is shifted by its positional encoding."""
    graph = seq.to_graph()
    compiled = compile_network(inst, graph, str(position), TRANSFORMER)
    return CompiledFibring(
        compiled.network,
        compiled.graph,
        compiled.vertex,
        TRANSFORMER,
        compiled.tree,
        compiled.root_instance,
        compiled.architecture,
        compiled.fixed_rules,
        compiled.leaf_edges,
        seq.position(position),
    )


def token_features(seq: TokenSequence) -> dict:
    return {str(t): seq.feature(t) for t in range(seq.length)}
