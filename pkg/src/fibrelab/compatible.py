"""Fibred Kripke models compatible with a fibred network and an input.

:func:`build_compatible` runs the fibred network on every point of the
input cube, turns every vector met at a (node, layer) into a world, relates
worlds whose vectors the node's instance maps to the same output, and wires
jumps from each input world to the worlds its own computation produced.
:func:`check_compatibility` re-derives every condition by brute force.
"""

from __future__ import annotations

import itertools
import os
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from fibrelab.errors import (
    DimensionError,
    FibrelabError,
    GuardExceeded,
    RuleDomainError,
    StructureError,
    UnreachableJump,
)
from fibrelab.feedforward import LayerSpan, NetworkInstance, run_span
from fibrelab.fibred import FibredNetwork, evaluate_fibred, evaluate_subtree
from fibrelab.linalg import RVector, format_vector, vector
from fibrelab.modal import IN, ComponentId, FibredModel, KripkeComponent, resolve_jump

DEFAULT_MAX_CUBE = 16


def max_cube_bits(override: int | None = None) -> int:
    if override is not None:
        return override
    env = os.environ.get("FIBRELAB_MAX_CUBE")
    return int(env) if env else DEFAULT_MAX_CUBE


def cube_points(n: int, offset: Sequence[Fraction] | None = None, max_bits: int | None = None) -> list[RVector]:
    """``{c, 1 + c}^n`` in lexicographic bit order (``c = 0`` by default)."""
    limit = max_cube_bits(max_bits)
    if n > limit:
        raise GuardExceeded(f"cube of {n} bits exceeds the limit of {limit} (set FIBRELAB_MAX_CUBE to override)")
    c = tuple(offset) if offset is not None else (Fraction(0),) * n
    if len(c) != n:
        raise DimensionError(f"offset has dim {len(c)}, cube has {n} bits")
    return [tuple(ci + b for ci, b in zip(c, bits)) for bits in itertools.product((0, 1), repeat=n)]


def bits_of(v: Sequence[Fraction], offset: Sequence[Fraction] | None = None) -> frozenset:
    """Propositions (1-based) true at a cube point."""
    c = offset if offset is not None else (0,) * len(v)
    return frozenset(i + 1 for i, (a, ci) in enumerate(zip(v, c)) if a == ci + 1)


@dataclass(frozen=True)
class WorldVectorMap:
    component: ComponentId
    to_vector: Mapping[str, RVector]
    _to_world: Mapping[RVector, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tv = {w: tuple(v) for w, v in self.to_vector.items()}
        object.__setattr__(self, "to_vector", tv)
        inv: dict = {}
        for w, v in tv.items():
            if v in inv:
                raise StructureError(f"worlds {inv[v]!r} and {w!r} of {self.component} share a vector")
            inv[v] = w
        if len({len(v) for v in tv.values()}) > 1:
            raise StructureError(f"vectors of {self.component} have mixed dimensions")
        object.__setattr__(self, "_to_world", inv)

    __hash__ = None

    def vector_of(self, w: str) -> RVector:
        return self.to_vector[w]

    def world_of(self, v: Sequence[Fraction]) -> str | None:
        return self._to_world.get(tuple(v))


@dataclass(frozen=True)
class CompatibleModel:
    model: FibredModel
    maps: Mapping[ComponentId, WorldVectorMap]
    instances: Mapping[str, NetworkInstance]
    x: RVector
    offset: RVector | None = None

    __hash__ = None

    def root_world(self, root: str) -> str | None:
        return self.maps[ComponentId(root, IN)].world_of(self.x)


def _span_to_output(comp: ComponentId, inst: NetworkInstance) -> LayerSpan:
    return LayerSpan(comp.layer, inst.depth)


def admissibility_witness(component: KripkeComponent, net: NetworkInstance, span: LayerSpan, pi: WorldVectorMap):
    """``None`` when ``pi`` is admissible, otherwise a counterexample dict."""
    seen: dict = {}
    for w in component.worlds:
        if w not in pi.to_vector:
            return {"reason": "unmapped world", "world": w}
        v = pi.to_vector[w]
        if v in seen:
            return {"reason": "not injective", "worlds": [seen[v], w]}
        seen[v] = w
    try:
        out = {w: run_span(net, span, pi.to_vector[w]) for w in component.worlds}
    except (DimensionError, FibrelabError) as e:
        return {"reason": f"dimension mismatch: {e}"}
    for a in component.worlds:
        succ = set(component.successors(a))
        for b in component.worlds:
            if (b in succ) != (out[a] == out[b]):
                return {
                    "reason": "relation disagrees with outputs",
                    "worlds": [a, b],
                    "related": b in succ,
                    "outputs": [format_vector(out[a]), format_vector(out[b])],
                }
    return None


def check_admissible(component: KripkeComponent, net: NetworkInstance, span: LayerSpan, pi: WorldVectorMap) -> bool:
    return admissibility_witness(component, net, span, pi) is None


def _world_id(cid: ComponentId, k: int) -> str:
    return f"{cid.node}:{'in' if cid.layer == IN else cid.layer}:{k}"


def build_compatible(
    fnet: FibredNetwork,
    x: Sequence[Fraction],
    *,
    offset: Sequence[Fraction] | None = None,
    max_bits: int | None = None,
) -> CompatibleModel:
    arch = fnet.architecture
    root = arch.root
    n = fnet.input_dim
    x = vector(x)
    cube = cube_points(n, offset, max_bits)
    if x not in cube:
        raise DimensionError(f"{format_vector(x)} is not a point of the input cube")
    offset = tuple(offset) if offset is not None else None

    # the run on x comes first so that its computations win any jump conflict
    order = [x] + [z for z in cube if z != x]
    in_vecs: dict[str, dict] = defaultdict(dict)  # node -> In vector -> first NodeTrace
    h_gens: dict[ComponentId, dict] = defaultdict(lambda: defaultdict(set))  # h -> In vectors of the node
    y_gens: dict[str, dict] = defaultdict(lambda: defaultdict(set))  # child -> y -> {(parent In vector, h_k)}
    x_trace = None
    for z in order:
        try:
            _, trace = evaluate_fibred(fnet, z)
        except RuleDomainError as e:
            e.source = z
            raise
        if x_trace is None:
            x_trace = trace
        for v in arch.nodes():
            t = trace[v]
            in_vecs[v].setdefault(t.input, t)
            if not t.stages:
                continue
            h_last = t.stages[-1].h
            for s in t.stages:
                h_gens[ComponentId(v, s.layer)][s.h].add(t.input)
                y_gens[s.child][s.y].add((t.input, h_last))
    instances = {v: x_trace[v].instance for v in arch.nodes()}

    # worlds, in canonical vector order per component
    comp_vectors: dict[ComponentId, list] = {}
    for v in arch.nodes():
        comp_vectors[ComponentId(v, IN)] = sorted(in_vecs[v], key=format_vector)
        for layer in range(1, arch.node_arch[v].depth + 1):
            cid = ComponentId(v, layer)
            comp_vectors[cid] = sorted(h_gens.get(cid, {}), key=format_vector)
    maps = {
        cid: WorldVectorMap(cid, {_world_id(cid, k): vec for k, vec in enumerate(vecs)})
        for cid, vecs in comp_vectors.items()
    }

    def world(cid, vec):
        return maps[cid].world_of(vec)

    # valuations, top-down
    val: dict[ComponentId, dict] = {}
    root_in = ComponentId(root, IN)
    val[root_in] = {world(root_in, z): bits_of(z, offset) for z in comp_vectors[root_in]}
    for v in arch.nodes():
        cin = ComponentId(v, IN)
        if v != root:
            parent = arch.parent(v)
            last = ComponentId(parent, arch.label(parent, arch.children(parent)[-1]).layer)
            val[cin] = {}
            for y in comp_vectors[cin]:
                props: set = set()
                for _g, hk in y_gens[v][y]:
                    props |= val[last][world(last, hk)]
                val[cin][world(cin, y)] = frozenset(props)
        for layer in range(1, arch.node_arch[v].depth + 1):
            cid = ComponentId(v, layer)
            val[cid] = {}
            for h in comp_vectors[cid]:
                props = set()
                for g in h_gens[cid][h]:
                    props |= val[cin][world(cin, g)]
                val[cid][world(cid, h)] = frozenset(props)

    # relations: kernels of the node's instance from the layer to the output
    components = {}
    for cid, vecs in comp_vectors.items():
        inst = instances[cid.node]
        span = _span_to_output(cid, inst)
        classes: dict = defaultdict(list)
        for vec in vecs:
            classes[run_span(inst, span, vec)].append(world(cid, vec))
        rel = {(a, b) for ws in classes.values() for a in ws for b in ws}
        components[cid] = KripkeComponent(tuple(maps[cid].to_vector), frozenset(rel), val[cid])

    # jumps out of input worlds, provenance of layer worlds
    jumps = {}
    provenance = {}
    for v in arch.nodes():
        cin = ComponentId(v, IN)
        for g, t in in_vecs[v].items():
            wg = world(cin, g)
            for s in t.stages:  # later stages at a shared layer overwrite earlier ones
                cl = ComponentId(v, s.layer)
                jumps[(cin, wg, cl)] = world(cl, s.h)
                cc = ComponentId(s.child, IN)
                jumps[(cin, wg, cc)] = world(cc, s.y)
        for layer in range(1, arch.node_arch[v].depth + 1):
            cid = ComponentId(v, layer)
            for h, gens in h_gens.get(cid, {}).items():
                provenance[(cid, world(cid, h))] = tuple(world(cin, g) for g in sorted(gens, key=format_vector))

    model = FibredModel(components, jumps, provenance, {v: arch.parent(v) for v in arch.nodes()})
    return CompatibleModel(model, maps, instances, x, offset)


# ---------------------------------------------------------------------------
# checking


@dataclass(frozen=True)
class ConditionResult:
    condition: str  # C0, C1, C2.1, C2.2, C2.3
    scope: str
    passed: bool
    witness: dict | None = None


@dataclass
class CompatibilityReport:
    results: list = field(default_factory=list)

    def add(self, condition, scope, passed, witness=None):
        self.results.append(ConditionResult(condition, scope, passed, witness))

    @property
    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        out: dict = {}
        for r in self.results:
            p, f = out.get(r.condition, (0, 0))
            out[r.condition] = (p + r.passed, f + (not r.passed))
        return out


def check_compatibility(C: CompatibleModel, fnet: FibredNetwork, x: Sequence[Fraction], tie_break: str = "least") -> CompatibilityReport:
    report = CompatibilityReport()
    arch = fnet.architecture
    root = arch.root
    M = C.model
    x = vector(x)
    n = fnet.input_dim
    root_in = ComponentId(root, IN)
    offset = C.offset if C.offset is not None else (Fraction(0),) * n

    # C0
    if C.instances.get(root) != fnet.root_instance:
        report.add("C0", root, False, {"reason": "root instance differs from the network's"})
    elif root_in not in C.maps or root_in not in M.components:
        report.add("C0", root, False, {"reason": "no root input component"})
    else:
        pi = C.maps[root_in]
        comp = M.components[root_in]
        bad = None
        for w in comp.worlds:
            vec = pi.to_vector.get(w)
            if vec is None or len(vec) != n or any(a not in (c, c + 1) for a, c in zip(vec, offset)):
                bad = {"reason": "world not mapped to a cube point", "world": w}
                break
            if bits_of(vec, offset) != comp.valuation[w]:
                bad = {
                    "reason": "bits disagree with valuation",
                    "world": w,
                    "vector": format_vector(vec),
                    "valuation": sorted(comp.valuation[w]),
                }
                break
        if bad is None and pi.world_of(x) is None:
            bad = {"reason": "input has no world", "vector": format_vector(x)}
        report.add("C0", root, bad is None, bad)

    # C1
    for cid, comp in M.components.items():
        pi = C.maps.get(cid)
        inst = C.instances.get(cid.node)
        if pi is None or inst is None:
            report.add("C1", str(cid), False, {"reason": "missing map or instance"})
            continue
        if set(pi.to_vector) != set(comp.worlds):
            report.add("C1", str(cid), False, {"reason": "map does not cover exactly the component's worlds"})
            continue
        wit = admissibility_witness(comp, inst, _span_to_output(cid, inst), pi)
        report.add("C1", str(cid), wit is None, wit)
    for cid in C.maps:
        if cid not in M.components:
            report.add("C1", str(cid), False, {"reason": "map for a missing component"})

    # C2, node by node from the root anchor
    anchor_root = C.maps[root_in].world_of(x) if root_in in C.maps else None
    if anchor_root is None:
        report.add("C2.1", root, False, {"reason": "no anchor world for the input"})
        return report
    for v in arch.nodes():
        if arch.is_leaf(v):
            continue
        cin = ComponentId(v, IN)
        try:
            anchor = anchor_root if v == root else resolve_jump(M, root_in, anchor_root, cin, tie_break)
        except UnreachableJump as e:
            report.add("C2.1", v, False, {"reason": f"anchor unreachable: {e}"})
            continue
        inst = C.instances.get(v)
        if inst is None or cin not in C.maps:
            report.add("C2.1", v, False, {"reason": "missing instance or input map"})
            continue
        try:
            _, trace = evaluate_subtree(fnet, v, inst, C.maps[cin].vector_of(anchor))
        except FibrelabError as e:
            report.add("C2.1", v, False, {"reason": f"evaluation failed: {e}"})
            continue
        stages = trace[v].stages
        last_at_layer = {s.layer: i for i, s in enumerate(stages)}
        for i, s in enumerate(stages):
            cc = ComponentId(s.child, IN)
            cl = ComponentId(v, s.layer)
            # C2.1
            wit = None
            if C.instances.get(s.child) != s.instance:
                wit = {"reason": "child instance differs", "child": s.child}
            else:
                try:
                    wy = resolve_jump(M, cin, anchor, cc, tie_break)
                    if C.maps[cc].vector_of(wy) != s.y:
                        wit = {"reason": "jump image is not y", "child": s.child, "y": format_vector(s.y),
                               "got": format_vector(C.maps[cc].vector_of(wy))}
                except (UnreachableJump, KeyError) as e:
                    wit = {"reason": f"no jump to child input: {e}", "child": s.child}
            report.add("C2.1", f"{v}->{s.child}", wit is None, wit)
            # C2.2
            wit = None
            if cl not in C.maps:
                wit = {"reason": "no component for the layer", "layer": s.layer}
            elif last_at_layer[s.layer] == i:
                try:
                    wh = resolve_jump(M, cin, anchor, cl, tie_break)
                    if C.maps[cl].vector_of(wh) != s.h:
                        wit = {"reason": "jump image is not h", "h": format_vector(s.h),
                               "got": format_vector(C.maps[cl].vector_of(wh))}
                except (UnreachableJump, KeyError) as e:
                    wit = {"reason": f"no jump to layer component: {e}"}
            elif C.maps[cl].world_of(s.h) is None:
                wit = {"reason": "intermediate h has no world", "h": format_vector(s.h)}
            report.add("C2.2", f"{v}->{s.child}", wit is None, wit)
        # C2.3
        hk = stages[-1].h
        ck = ComponentId(v, stages[-1].layer)
        wk = C.maps[ck].world_of(hk) if ck in C.maps else None
        for s in stages:
            cc = ComponentId(s.child, IN)
            wy = C.maps[cc].world_of(s.y) if cc in C.maps else None
            if wk is None or wy is None:
                report.add("C2.3", f"{v}->{s.child}", False, {"reason": "h_k or y has no world"})
                continue
            a, b = M.components[ck].valuation[wk], M.components[cc].valuation[wy]
            ok = a == b
            report.add("C2.3", f"{v}->{s.child}", ok,
                       None if ok else {"h_k_world": wk, "h_k_props": sorted(a), "y_world": wy, "y_props": sorted(b)})
    return report


# ---------------------------------------------------------------------------
# isomorphism transport


def transport_iso(C: CompatibleModel, comp: ComponentId, relabel: Mapping[str, str]) -> CompatibleModel:
    """Rename the worlds of one component and carry everything along."""
    comp = ComponentId(*comp)
    M = C.model
    if comp not in M.components:
        raise StructureError(f"no component {comp}")
    old = M.components[comp]
    if set(relabel) != set(old.worlds):
        raise StructureError("relabeling must be defined exactly on the component's worlds")
    new_ids = list(relabel.values())
    if len(set(new_ids)) != len(new_ids):
        raise StructureError("relabeling is not injective")
    clash = [w for w in new_ids if M.has_world(w) and M.home(w) != comp]
    if clash:
        raise StructureError(f"new world ids collide with other components: {sorted(clash)}")

    def r(w):
        return relabel.get(w, w) if M.has_world(w) and M.home(w) == comp else w

    components = dict(M.components)
    components[comp] = KripkeComponent(
        tuple(relabel[w] for w in old.worlds),
        frozenset((relabel[a], relabel[b]) for a, b in old.relation),
        {relabel[w]: p for w, p in old.valuation.items()},
    )
    jumps = {(s, r(w), t): r(v) for (s, w, t), v in M.jumps.items()}
    provenance = {(c, r(w)): tuple(r(g) for g in gens) for (c, w), gens in M.provenance.items()}
    maps = dict(C.maps)
    maps[comp] = WorldVectorMap(comp, {relabel[w]: v for w, v in C.maps[comp].to_vector.items()})
    return CompatibleModel(FibredModel(components, jumps, provenance, M.parents), maps, C.instances, C.x, C.offset)
