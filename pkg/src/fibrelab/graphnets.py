"""Direct forward passes for sum-aggregation GNNs, hard-attention GATs and
Transformer encoders viewed as GATs on complete graphs.

These are the reference computations that compiled fibred networks are
checked against.  Every layer uses truncated ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from fibrelab.errors import DimensionError, ShapeError, StructureError
from fibrelab.linalg import RMatrix, RVector, add, dot, hardmax, scale, truncated_relu, vector


@dataclass(frozen=True)
class FeaturedGraph:
    nodes: tuple
    edges: frozenset
    features: Mapping[str, RVector]
    _nbrs: Mapping[str, tuple] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(str(v) for v in self.nodes)
        if len(set(nodes)) != len(nodes):
            raise StructureError("duplicate graph nodes")
        edges = set()
        for e in self.edges:
            pair = tuple(str(v) for v in e)
            if len(set(pair)) != 2 or len(pair) > 2:
                raise StructureError(f"self-loop or malformed edge {pair!r}")
            a, b = pair
            if a not in nodes or b not in nodes:
                raise StructureError(f"edge ({a}, {b}) mentions an unknown node")
            edges.add(frozenset((a, b)))
        feats = {str(v): vector(f) for v, f in self.features.items()}
        if set(feats) != set(nodes):
            raise StructureError("every node needs a feature vector")
        if len({len(f) for f in feats.values()}) > 1:
            raise DimensionError("node features have mixed dimensions")
        nbrs = {v: [] for v in nodes}
        for e in edges:
            a, b = tuple(e)
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "_nbrs", {v: tuple(sorted(ns)) for v, ns in nbrs.items()})

    __hash__ = None

    @classmethod
    def build(cls, nodes, edges, features) -> "FeaturedGraph":
        return cls(tuple(nodes), frozenset(frozenset(e) for e in edges), dict(features))

    def neighbors(self, u: str) -> tuple:
        return self._nbrs[u]

    def degree(self, u: str) -> int:
        return len(self._nbrs[u])

    @property
    def feature_dim(self) -> int:
        return len(next(iter(self.features.values()))) if self.features else 0

    def with_features(self, features: Mapping[str, Sequence]) -> "FeaturedGraph":
        return FeaturedGraph(self.nodes, self.edges, dict(features))


@dataclass(frozen=True)
class GnnInstance:
    A: tuple  # RMatrix per layer, d_l x d_{l-1}
    B: tuple
    b: tuple  # RVector per layer

    def __post_init__(self):
        object.__setattr__(self, "A", tuple(self.A))
        object.__setattr__(self, "B", tuple(self.B))
        object.__setattr__(self, "b", tuple(tuple(v) for v in self.b))
        L = len(self.A)
        if L < 1 or len(self.B) != L or len(self.b) != L:
            raise ShapeError("A, B and b need one entry per layer (at least one layer)")
        d_prev = self.A[0].cols
        for l in range(L):
            if self.A[l].shape != self.B[l].shape:
                raise ShapeError(f"layer {l + 1}: A and B shapes differ")
            if self.A[l].cols != d_prev:
                raise ShapeError(f"layer {l + 1}: expects input dim {self.A[l].cols}, previous layer has {d_prev}")
            if len(self.b[l]) != self.A[l].rows:
                raise ShapeError(f"layer {l + 1}: bias has dim {len(self.b[l])}")
            d_prev = self.A[l].rows

    @property
    def depth(self) -> int:
        return len(self.A)

    @property
    def dims(self) -> tuple:
        return (self.A[0].cols,) + tuple(m.rows for m in self.A)

    @property
    def attention(self):
        return None


@dataclass(frozen=True)
class GatInstance(GnnInstance):
    a: tuple = ()  # attention vector per layer, length 2 * d_l

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "a", tuple(tuple(v) for v in self.a))
        if len(self.a) != self.depth:
            raise ShapeError("one attention vector per layer is required")
        for l, vec in enumerate(self.a):
            if len(vec) != 2 * self.A[l].rows:
                raise ShapeError(f"layer {l + 1}: attention vector must have length {2 * self.A[l].rows}")

    @property
    def attention(self):
        return self.a


@dataclass(frozen=True)
class ForwardResult:
    """``h[l][u]`` for l in 1..L and ``x[l][u]`` for l in 0..L (index 0 of ``h`` is unused)."""

    h: tuple
    x: tuple

    def final_h(self, u: str) -> RVector:
        return self.h[-1][u]

    def final_x(self, u: str) -> RVector:
        return self.x[-1][u]


def _check_graph(inst: GnnInstance, graph: FeaturedGraph):
    if graph.feature_dim != inst.dims[0]:
        raise DimensionError(f"features have dim {graph.feature_dim}, network expects {inst.dims[0]}")


def gat_attention_coeffs(inst: GatInstance, layer: int, u: str, x: Mapping[str, RVector], graph: FeaturedGraph) -> dict:
    """Hardmax attention of ``u`` over itself and its neighbours at ``layer`` (1-based)."""
    A, B, a = inst.A[layer - 1], inst.B[layer - 1], inst.a[layer - 1]
    group = sorted((u,) + graph.neighbors(u))
    for w in group:
        if w not in x:
            raise KeyError(f"no layer-{layer - 1} vector for node {w!r}")
    own = B.matvec(x[u])
    alpha = hardmax([dot(a, A.matvec(x[w]) + own) for w in group])
    return dict(zip(group, alpha))


def _forward(inst: GnnInstance, graph: FeaturedGraph, attention: bool) -> ForwardResult:
    _check_graph(inst, graph)
    xs = [dict(graph.features)]
    hs: list = [None]
    for layer in range(1, inst.depth + 1):
        A, B, b = inst.A[layer - 1], inst.B[layer - 1], inst.b[layer - 1]
        prev = xs[-1]
        h = {}
        for u in graph.nodes:
            if attention:
                alpha = gat_attention_coeffs(inst, layer, u, prev, graph)
                acc = add(scale(alpha[u], B.matvec(prev[u])), b)
                for w in graph.neighbors(u):
                    if alpha[w]:
                        acc = add(acc, scale(alpha[w], A.matvec(prev[w])))
            else:
                acc = add(B.matvec(prev[u]), b)
                for w in graph.neighbors(u):
                    acc = add(acc, A.matvec(prev[w]))
            h[u] = acc
        hs.append(h)
        xs.append({u: truncated_relu(v) for u, v in h.items()})
    return ForwardResult(tuple(hs), tuple(xs))


def gnn_forward(inst: GnnInstance, graph: FeaturedGraph) -> ForwardResult:
    return _forward(inst, graph, attention=False)


def gat_forward(inst: GatInstance, graph: FeaturedGraph) -> ForwardResult:
    return _forward(inst, graph, attention=True)


def forward(inst: GnnInstance, graph: FeaturedGraph) -> ForwardResult:
    return _forward(inst, graph, attention=inst.attention is not None)


# ---------------------------------------------------------------------------
# token sequences


def default_pos(t: int, s: int, d: int) -> RVector:
    return (Fraction(t, s + 1),) * d


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple
    vec_table: Mapping[str, RVector]
    pos_fn: Callable[[int, int, int], RVector] = default_pos
    pos_table: Mapping[int, RVector] | None = None  # explicit encoding, overrides pos_fn

    def __post_init__(self):
        if not self.tokens:
            raise ShapeError("token sequences must be nonempty")
        object.__setattr__(self, "tokens", tuple(str(t) for t in self.tokens))
        object.__setattr__(self, "vec_table", {str(k): vector(v) for k, v in self.vec_table.items()})
        if self.pos_table is not None:
            object.__setattr__(self, "pos_table", {int(k): vector(v) for k, v in self.pos_table.items()})

    __hash__ = None

    @property
    def length(self) -> int:
        return len(self.tokens)

    def position(self, t: int) -> RVector:
        d = len(next(iter(self.vec_table.values())))
        if self.pos_table is not None:
            return self.pos_table[t]
        return tuple(self.pos_fn(t, self.length, d))

    def feature(self, t: int) -> RVector:
        tok = self.tokens[t]
        if tok not in self.vec_table:
            raise KeyError(f"token {tok!r} has no vector")
        return add(self.vec_table[tok], self.position(t))

    def to_graph(self) -> FeaturedGraph:
        """Complete graph on positions ``"0" .. "s-1"`` with encoded features."""
        nodes = [str(t) for t in range(self.length)]
        edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]]
        return FeaturedGraph.build(nodes, edges, {str(t): self.feature(t) for t in range(self.length)})


def transformer_forward(inst: GatInstance, seq: TokenSequence) -> ForwardResult:
    return gat_forward(inst, seq.to_graph())


def _classify(out: RVector) -> bool:
    if len(out) != 1:
        raise ShapeError(f"classifier needs output dim 1, got {len(out)}")
    return out[0] > 0


def classify_node(inst: GnnInstance, graph: FeaturedGraph, u: str) -> bool:
    return _classify(forward(inst, graph).final_x(str(u)))


def classify_token(inst: GatInstance, seq: TokenSequence, t: int) -> bool:
    return _classify(transformer_forward(inst, seq).final_x(str(t)))


def matrix(rows) -> RMatrix:
    return RMatrix.from_rows(rows)


__all__ = [
    "FeaturedGraph",
    "ForwardResult",
    "GatInstance",
    "GnnInstance",
    "TokenSequence",
    "classify_node",
    "classify_token",
    "default_pos",
    "forward",
    "gat_attention_coeffs",
    "gat_forward",
    "gnn_forward",
    "matrix",
    "transformer_forward",
]
