"""Seeded random instances for the verification suites.

All randomness flows from :class:`random.Random` objects seeded with
strings derived from the suite seed and the case index, so a case can be
regenerated in isolation.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from fibrelab.compatible import cube_points
from fibrelab.errors import RuleDomainError
from fibrelab.feedforward import NetworkInstance, NeuralArchitecture
from fibrelab.fibred import EdgeLabel, FibredNetwork, FibringArchitecture, TableRule, evaluate_fibred
from fibrelab.graphnets import FeaturedGraph, GatInstance, GnnInstance, TokenSequence
from fibrelab.linalg import ActivationSpec, Identity, RMatrix, TruncatedReLU


@dataclass(frozen=True)
class InstanceGenConfig:
    seed: int = 0
    max_layers: int = 3
    max_dim: int = 3
    max_nodes: int = 5
    max_bits: int = 8  # |V| * d_0 bound for exhaustive feature enumeration
    max_seq_len: int = 4
    max_n: int = 4  # fibred root input bits
    max_tree_depth: int = 2
    max_children: int = 2
    coeff_range: tuple = (-2, 2)
    denominators: tuple = (1, 2)
    edge_prob: float = 0.5
    injective_tables: bool = True
    table_pool: int = 2  # child instances drawn per edge
    class_f_root: bool = True

    def __post_init__(self):
        if not 1 <= self.max_n <= 16:
            raise ValueError("max_n must be in 1..16")
        if not 1 <= self.max_nodes <= 8:
            raise ValueError("max_nodes must be in 1..8")
        if self.max_layers < 1 or self.max_dim < 1 or self.max_tree_depth < 0:
            raise ValueError("layer, dimension and depth bounds must be positive")
        lo, hi = self.coeff_range
        if lo > hi or not self.denominators or min(self.denominators) < 1:
            raise ValueError("bad coefficient range")
        object.__setattr__(self, "coeff_range", tuple(self.coeff_range))
        object.__setattr__(self, "denominators", tuple(self.denominators))

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceGenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "InstanceGenConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coeff_range"] = list(self.coeff_range)
        d["denominators"] = list(self.denominators)
        return d


def case_rng(seed: int, suite: str, case: int) -> random.Random:
    return random.Random(f"{seed}:{suite}:{case}")


# ---------------------------------------------------------------------------
# numbers and matrices


def rand_rational(rng: random.Random, cfg: InstanceGenConfig) -> Fraction:
    lo, hi = cfg.coeff_range
    return Fraction(rng.randint(lo, hi), rng.choice(cfg.denominators))


def rand_vector(rng, cfg, n: int) -> tuple:
    return tuple(rand_rational(rng, cfg) for _ in range(n))


def rand_matrix(rng, cfg, rows: int, cols: int) -> RMatrix:
    return RMatrix.from_rows([rand_vector(rng, cfg, cols) for _ in range(rows)], cols)


def rand_bits(rng, n: int) -> tuple:
    return tuple(Fraction(rng.randint(0, 1)) for _ in range(n))


# ---------------------------------------------------------------------------
# graph networks


def random_gnn(rng, cfg: InstanceGenConfig, *, attention: bool = False, d_in: int | None = None,
               d_out: int | None = None, layers: int | None = None) -> GnnInstance:
    L = layers if layers is not None else rng.randint(1, cfg.max_layers)
    dims = [d_in or rng.randint(1, cfg.max_dim)] + [rng.randint(1, cfg.max_dim) for _ in range(L)]
    if d_out is not None:
        dims[-1] = d_out
    A = [rand_matrix(rng, cfg, dims[l + 1], dims[l]) for l in range(L)]
    B = [rand_matrix(rng, cfg, dims[l + 1], dims[l]) for l in range(L)]
    b = [rand_vector(rng, cfg, dims[l + 1]) for l in range(L)]
    if attention:
        return GatInstance(A, B, b, [rand_vector(rng, cfg, 2 * dims[l + 1]) for l in range(L)])
    return GnnInstance(A, B, b)


def random_graph(rng, cfg: InstanceGenConfig, d0: int, nodes: int | None = None) -> FeaturedGraph:
    n = nodes if nodes is not None else rng.randint(1, cfg.max_nodes)
    names = [f"v{i}" for i in range(n)]
    edges = [(a, b) for i, a in enumerate(names) for b in names[i + 1:] if rng.random() < cfg.edge_prob]
    return FeaturedGraph.build(names, edges, {v: rand_bits(rng, d0) for v in names})


def random_sequence(rng, cfg: InstanceGenConfig, d0: int, length: int | None = None) -> TokenSequence:
    s = length if length is not None else rng.randint(1, cfg.max_seq_len)
    tokens = [f"t{i}" for i in range(s)]
    return TokenSequence(tuple(tokens), {t: rand_bits(rng, d0) for t in tokens})


def all_assignments(names, d0: int):
    """Every Boolean feature assignment, in lexicographic order of the flattened bits."""
    names = list(names)
    for bits in cube_points(len(names) * d0, max_bits=len(names) * d0):
        yield {v: bits[i * d0:(i + 1) * d0] for i, v in enumerate(names)}


# ---------------------------------------------------------------------------
# fibred networks


def random_architecture(rng, cfg, d_in: int, d_out: int) -> NeuralArchitecture:
    depth = rng.randint(1, cfg.max_layers)
    dims = [d_in] + [rng.randint(1, cfg.max_dim) for _ in range(depth - 1)] + [d_out]
    acts = tuple(ActivationSpec.uniform(d, rng.choice((Identity(), TruncatedReLU()))) for d in dims[1:-1])
    return NeuralArchitecture(tuple(dims), acts)


def random_instance(rng, cfg, arch: NeuralArchitecture) -> NetworkInstance:
    d = arch.dims
    return NetworkInstance(
        arch,
        tuple(rand_matrix(rng, cfg, d[l + 1], d[l]) for l in range(arch.depth)),
        tuple(rand_vector(rng, cfg, d[l + 1]) for l in range(arch.depth)),
    )


class _TableFiller:
    """Lazily adds table entries; a fresh child input per key when injective."""

    def __init__(self, rng, cfg, arch: FibringArchitecture, pools):
        self.rng, self.cfg, self.arch, self.pools = rng, cfg, arch, pools
        self.used: dict = {}

    def entry(self, edge, key):
        child = edge[1]
        inst = self.rng.choice(self.pools[edge])
        n = self.arch.node_arch[child].input_dim
        seen = self.used.setdefault(edge, set())
        if self.cfg.injective_tables:
            for _ in range(200):
                y = rand_vector(self.rng, self.cfg, n)
                if y not in seen:
                    break
            else:
                y = tuple(Fraction(len(seen) + 1, 7 ** (i + 1)) for i in range(n))
        else:
            y = self.rng.choice(sorted(seen)) if seen and self.rng.random() < 0.5 else rand_vector(self.rng, self.cfg, n)
        seen.add(y)
        return inst, y


def complete_tables(fnet: FibredNetwork, filler: _TableFiller, offset=None, max_rounds: int = 10_000) -> FibredNetwork:
    """Add entries until every cube point evaluates without a domain error."""
    rules = {e: TableRule(dict(r.entries)) if isinstance(r, TableRule) else r for e, r in fnet.rules.items()}
    for e, r in rules.items():
        if isinstance(r, TableRule):
            filler.used.setdefault(e, set()).update(y for _, y in r.entries.values())
    for _ in range(max_rounds):
        cur = FibredNetwork(fnet.root_instance, fnet.architecture, rules)
        missing = None
        for z in cube_points(fnet.input_dim, offset):
            try:
                evaluate_fibred(cur, z)
            except RuleDomainError as e:
                missing = e
                break
        if missing is None:
            return cur
        edge = (missing.path[-2], missing.path[-1])
        entries = dict(rules[edge].entries)
        entries[missing.vector] = filler.entry(edge, missing.vector)
        rules[edge] = TableRule(entries)
    raise RuntimeError("table completion did not converge")


def random_fibred(rng, cfg: InstanceGenConfig, n: int | None = None) -> FibredNetwork:
    """Random tree of depth <= max_tree_depth with table rules total on the input cube."""
    n = n if n is not None else rng.randint(1, cfg.max_n)
    if cfg.class_f_root:
        hidden = rng.randint(1, cfg.max_dim + 1)
        root_arch = NeuralArchitecture.linear((n, hidden, 1))
    else:
        root_arch = random_architecture(rng, cfg, n, 1)
    node_arch = {"r": root_arch}
    edges = {}

    def grow(node: str, level: int):
        if level >= cfg.max_tree_depth:
            return
        A = node_arch[node]
        k = rng.randint(0, cfg.max_children)
        layers = [1] if (node == "r" and cfg.class_f_root) else list(range(1, A.depth + 1))
        free = {l: list(range(A.dims[l])) for l in layers}
        for i in range(k):
            opts = [l for l in layers if free[l]]
            if not opts:
                break
            layer = rng.choice(opts)
            size = rng.randint(1, len(free[layer]))
            pos = sorted(rng.sample(free[layer], size))
            free[layer] = [p for p in free[layer] if p not in pos]
            child = f"{node}.{i}"
            node_arch[child] = random_architecture(rng, cfg, rng.randint(1, cfg.max_dim), len(pos))
            edges[(node, child)] = EdgeLabel(layer, tuple(pos))
            grow(child, level + 1)

    grow("r", 0)
    arch = FibringArchitecture("r", node_arch, edges)
    pools = {e: [random_instance(rng, cfg, node_arch[e[1]]) for _ in range(cfg.table_pool)] for e in edges}
    root = random_instance(rng, cfg, root_arch)
    fnet = FibredNetwork(root, arch, {e: TableRule({}) for e in edges})
    return complete_tables(fnet, _TableFiller(rng, cfg, arch, pools))


def table_filler_for(fnet: FibredNetwork, rng, cfg: InstanceGenConfig) -> _TableFiller:
    """Filler reusing the instances already present in the tables."""
    pools = {}
    for e, r in fnet.rules.items():
        insts = sorted({id(i): i for i, _ in getattr(r, "entries", {}).values()}.values(), key=lambda i: repr(i))
        pools[e] = insts or [random_instance(rng, cfg, fnet.architecture.node_arch[e[1]])]
    return _TableFiller(rng, cfg, fnet.architecture, pools)


def describe_bounds(fnet: FibredNetwork) -> dict:
    arch = fnet.architecture
    return {
        "n": fnet.input_dim,
        "tree_depth": arch.depth(),
        "nodes": len(arch.nodes()),
        "table_sizes": {f"{p}->{c}": len(r.entries) for (p, c), r in sorted(fnet.rules.items()) if isinstance(r, TableRule)},
    }


def random_formula(rng, n: int, boxes, depth: int = 3, context=None):
    """Random formula over p1..pn; ``boxes(context)`` lists the components a box may target
    from ``context`` and ``None`` disables boxes."""
    from fibrelab.modal import TOP, And, Box, Not, Prop

    def go(d, ctx):
        choices = ["prop", "top", "not", "and"] + (["box", "box"] if d > 0 and boxes is not None else [])
        kind = rng.choice(choices) if d > 0 else rng.choice(["prop", "prop", "top"])
        if kind == "prop":
            return Prop(rng.randint(1, n))
        if kind == "top":
            return TOP
        if kind == "not":
            return Not(go(d - 1, ctx))
        if kind == "and":
            return And(go(d - 1, ctx), go(d - 1, ctx))
        targets = boxes(ctx)
        if not targets:
            return Prop(rng.randint(1, n))
        t = rng.choice(targets)
        return Box(t, go(d - 1, t))

    return go(depth, context)


__all__ = [
    "InstanceGenConfig",
    "all_assignments",
    "case_rng",
    "complete_tables",
    "describe_bounds",
    "rand_bits",
    "rand_matrix",
    "rand_rational",
    "rand_vector",
    "random_architecture",
    "random_fibred",
    "random_formula",
    "random_gnn",
    "random_graph",
    "random_instance",
    "random_sequence",
    "table_filler_for",
]
