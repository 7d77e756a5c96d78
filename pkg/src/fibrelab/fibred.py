"""Fibring architectures, fibring rules and recursive fibred evaluation.

Evaluation follows the stage recurrence: the root runs up to the layer of
its first child edge, the child's fibring rule turns that vector into a
child instance and input, the child's (recursive) output is spliced into
the parent's vector at the edge positions, and the parent resumes from the
spliced vector.  Stage ``i > 1`` resumes from ``h_{i-1}`` (the spliced
vector), not from the child input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby
from fractions import Fraction
from typing import Mapping, Sequence, Union

from fibrelab.errors import DimensionError, RuleDomainError, ShapeError, StructureError
from fibrelab.feedforward import NetworkInstance, NeuralArchitecture, run_network, run_span, scalar_output
from fibrelab.linalg import RVector


@dataclass(frozen=True, order=True)
class EdgeLabel:
    layer: int
    positions: tuple

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if len(set(pos)) != len(pos):
            raise StructureError(f"repeated position in edge label {pos}")
        object.__setattr__(self, "positions", tuple(sorted(pos)))


Edge = tuple  # (parent, child)


@dataclass(frozen=True, eq=True)
class FibringArchitecture:
    root: str
    node_arch: Mapping[str, NeuralArchitecture]
    edges: Mapping[Edge, EdgeLabel]
    _children: Mapping[str, tuple] = field(init=False, repr=False, compare=False)
    _parent: Mapping[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        node_arch = dict(self.node_arch)
        edges = {tuple(e): lab for e, lab in self.edges.items()}
        object.__setattr__(self, "node_arch", node_arch)
        object.__setattr__(self, "edges", edges)
        if self.root not in node_arch:
            raise StructureError(f"root {self.root!r} has no architecture")
        parent: dict[str, str] = {}
        children: dict[str, list] = {v: [] for v in node_arch}
        for (p, c), lab in edges.items():
            if p not in node_arch or c not in node_arch:
                raise StructureError(f"edge ({p!r}, {c!r}) mentions an unknown node")
            if c == self.root:
                raise StructureError("the root cannot have a parent")
            if c in parent:
                raise StructureError(f"node {c!r} has two parents")
            parent[c] = p
            children[p].append((lab.layer, lab.positions, c))
        # every node must be reachable from the root; this also rules out cycles
        seen, stack = {self.root}, [self.root]
        while stack:
            v = stack.pop()
            for _, _, c in children[v]:
                if c in seen:
                    raise StructureError(f"cycle through {c!r}")
                seen.add(c)
                stack.append(c)
        if seen != set(node_arch):
            raise StructureError(f"nodes not reachable from the root: {sorted(set(node_arch) - seen)}")
        object.__setattr__(self, "_children", {v: tuple(c for *_, c in sorted(cs)) for v, cs in children.items()})
        object.__setattr__(self, "_parent", parent)

    def children(self, node: str) -> tuple:
        """Children in stage order: by layer, then by position set."""
        return self._children[node]

    def parent(self, node: str) -> str | None:
        return self._parent.get(node)

    def label(self, parent: str, child: str) -> EdgeLabel:
        return self.edges[(parent, child)]

    def is_leaf(self, node: str) -> bool:
        return not self._children[node]

    def nodes(self) -> list[str]:
        """Nodes in breadth-first stage order."""
        out, queue = [], [self.root]
        while queue:
            v = queue.pop(0)
            out.append(v)
            queue.extend(self._children[v])
        return out

    def depth(self, node: str | None = None) -> int:
        node = self.root if node is None else node
        return 1 + max((self.depth(c) for c in self._children[node]), default=-1)

    def subtree(self, node: str) -> "FibringArchitecture":
        keep = []
        stack = [node]
        while stack:
            v = stack.pop()
            keep.append(v)
            stack.extend(self._children[v])
        kept = set(keep)
        return FibringArchitecture(
            node,
            {v: self.node_arch[v] for v in keep},
            {e: lab for e, lab in self.edges.items() if e[0] in kept},
        )

    def path_to(self, node: str) -> list[str]:
        path = [node]
        while path[-1] != self.root:
            path.append(self._parent[path[-1]])
        return path[::-1]


# ---------------------------------------------------------------------------
# fibring rules


@dataclass(frozen=True)
class ConstantRule:
    instance: NetworkInstance
    input: RVector

    def __post_init__(self):
        object.__setattr__(self, "input", tuple(self.input))


@dataclass(frozen=True)
class SelfFibreRule:
    """Hands the incoming vector to the child unchanged."""

    instance: NetworkInstance


@dataclass(frozen=True)
class TableRule:
    entries: Mapping[RVector, tuple]  # vector -> (NetworkInstance, RVector)

    def __post_init__(self):
        object.__setattr__(self, "entries", {tuple(k): (n, tuple(y)) for k, (n, y) in self.entries.items()})

    __hash__ = None


FibringRule = Union[ConstantRule, SelfFibreRule, TableRule]


def apply_rule(rule: FibringRule, x: Sequence[Fraction], path: Sequence[str] = ()) -> tuple[NetworkInstance, RVector]:
    x = tuple(x)
    if isinstance(rule, ConstantRule):
        return rule.instance, rule.input
    if isinstance(rule, SelfFibreRule):
        return rule.instance, x
    if isinstance(rule, TableRule):
        try:
            return rule.entries[x]
        except KeyError:
            raise RuleDomainError(x, path) from None
    raise TypeError(f"unknown rule kind {type(rule).__name__}")


@dataclass(frozen=True)
class FibredNetwork:
    root_instance: NetworkInstance
    architecture: FibringArchitecture
    rules: Mapping[Edge, FibringRule]

    def __post_init__(self):
        object.__setattr__(self, "rules", {tuple(e): r for e, r in self.rules.items()})
        arch = self.architecture
        if self.root_instance.architecture != arch.node_arch[arch.root]:
            raise ShapeError("root instance does not match the root architecture")
        missing = set(arch.edges) - set(self.rules)
        if missing:
            raise StructureError(f"edges without fibring rule: {sorted(missing)}")
        extra = set(self.rules) - set(arch.edges)
        if extra:
            raise StructureError(f"rules for unknown edges: {sorted(extra)}")

    __hash__ = None

    @property
    def input_dim(self) -> int:
        return self.root_instance.dims[0]

    def subnetwork(self, node: str, instance: NetworkInstance) -> "FibredNetwork":
        sub = self.architecture.subtree(node)
        return FibredNetwork(instance, sub, {e: self.rules[e] for e in sub.edges})


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Stage:
    child: str
    layer: int
    positions: tuple
    x: RVector
    instance: NetworkInstance
    y: RVector
    h: RVector


@dataclass(frozen=True)
class NodeTrace:
    node: str
    instance: NetworkInstance
    input: RVector
    stages: tuple
    output: RVector


@dataclass(frozen=True)
class EvalTrace:
    root: str
    nodes: Mapping[str, NodeTrace]

    __hash__ = None

    def __getitem__(self, node: str) -> NodeTrace:
        return self.nodes[node]


def _stage_order(arch: FibringArchitecture, node: str, reverse_ties: bool) -> list[str]:
    kids = list(arch.children(node))
    if not reverse_ties:
        return kids
    out: list[str] = []
    for _, group in groupby(kids, key=lambda c: arch.label(node, c).layer):
        out.extend(reversed(list(group)))
    return out


def _evaluate_node(fnet, node, instance, y, traces, path, reverse_ties):
    arch = fnet.architecture
    if instance.architecture != arch.node_arch[node]:
        raise ShapeError(f"instance at {'/'.join(path)} does not match the node architecture")
    if len(y) != instance.dims[0]:
        raise DimensionError(f"input of dim {len(y)} at {'/'.join(path)}, expected {instance.dims[0]}")
    kids = _stage_order(arch, node, reverse_ties)
    if not kids:
        out = run_network(instance, y)
        traces[node] = NodeTrace(node, instance, tuple(y), (), out)
        return out
    stages = []
    prev_layer, prev_h = 0, tuple(y)
    for child in kids:
        lab = arch.label(node, child)
        x_i = run_span(instance, (prev_layer, lab.layer), prev_h)
        child_path = (*path, child)
        child_inst, y_i = apply_rule(fnet.rules[(node, child)], x_i, child_path)
        sub_out = _evaluate_node(fnet, child, child_inst, y_i, traces, child_path, reverse_ties)
        if len(sub_out) != len(lab.positions):
            raise DimensionError(
                f"child {'/'.join(child_path)} returned dim {len(sub_out)} for {len(lab.positions)} positions"
            )
        h = list(x_i)
        for p, val in zip(lab.positions, sub_out):
            if p >= len(h):
                raise DimensionError(f"position {p} outside layer {lab.layer} of dim {len(h)}")
            h[p] = val
        h_i = tuple(h)
        stages.append(Stage(child, lab.layer, lab.positions, x_i, child_inst, tuple(y_i), h_i))
        prev_layer, prev_h = lab.layer, h_i
    out = run_span(instance, (prev_layer, instance.depth), prev_h)
    traces[node] = NodeTrace(node, instance, tuple(y), tuple(stages), out)
    return out


def evaluate_fibred(fnet: FibredNetwork, x: Sequence[Fraction], *, reverse_ties: bool = False) -> tuple[RVector, EvalTrace]:
    """Evaluate the fibred network on ``x``; returns the output and the full trace.

    ``reverse_ties`` processes children sharing a layer in reverse canonical
    order; it exists to test order (in)dependence.
    """
    x = tuple(x)
    if len(x) != fnet.input_dim:
        raise DimensionError(f"fibred network expects input of dim {fnet.input_dim}, got {len(x)}")
    traces: dict[str, NodeTrace] = {}
    root = fnet.architecture.root
    out = _evaluate_node(fnet, root, fnet.root_instance, x, traces, (root,), reverse_ties)
    return out, EvalTrace(root, traces)


def evaluate_subtree(fnet: FibredNetwork, node: str, instance: NetworkInstance, y: Sequence[Fraction]) -> tuple[RVector, EvalTrace]:
    """Run the fibred sub-network rooted at ``node`` with a given instance."""
    traces: dict[str, NodeTrace] = {}
    out = _evaluate_node(fnet, node, instance, tuple(y), traces, tuple(fnet.architecture.path_to(node)), False)
    return out, EvalTrace(node, traces)


def classify_fibred(fnet: FibredNetwork, x: Sequence[Fraction]) -> bool:
    if fnet.root_instance.architecture.output_dim != 1:
        raise ShapeError("fibred classifier needs a scalar root output")
    out, _ = evaluate_fibred(fnet, x)
    return scalar_output(out) > 0


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    is_tree: bool = True
    disjoint: bool = True
    dims_consistent: bool = True
    in_class_F: bool = False
    problems: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.is_tree and self.disjoint and self.dims_consistent


def validate_architecture(arch: FibringArchitecture) -> ValidationReport:
    """Check the edge-label constraints and membership in the two-linear-layer root class.

    Tree structure itself is enforced when the architecture is built.
    """
    report = ValidationReport()
    for node in arch.nodes():
        A = arch.node_arch[node]
        used: dict[int, dict[int, str]] = {}
        for child in arch.children(node):
            lab = arch.label(node, child)
            if not 1 <= lab.layer <= A.depth:
                report.dims_consistent = False
                report.problems.append(f"edge {node}->{child}: layer {lab.layer} outside 1..{A.depth}")
                continue
            width = A.dims[lab.layer]
            bad = [p for p in lab.positions if p >= width]
            if bad:
                report.dims_consistent = False
                report.problems.append(f"edge {node}->{child}: positions {bad} outside layer of dim {width}")
            out_dim = arch.node_arch[child].output_dim
            if len(lab.positions) != out_dim:
                report.dims_consistent = False
                report.problems.append(
                    f"edge {node}->{child}: {len(lab.positions)} positions for child output dim {out_dim}"
                )
            taken = used.setdefault(lab.layer, {})
            for p in lab.positions:
                if p in taken:
                    report.disjoint = False
                    report.problems.append(
                        f"edges {node}->{taken[p]} and {node}->{child} share position {p} at layer {lab.layer}"
                    )
                else:
                    taken[p] = child
    root_arch = arch.node_arch[arch.root]
    root_layers = {arch.label(arch.root, c).layer for c in arch.children(arch.root)}
    report.in_class_F = (
        root_arch.depth == 2
        and all(a.is_identity() for a in root_arch.activations)
        and root_arch.output_dim == 1
        and len(root_layers) <= 1
    )
    return report
