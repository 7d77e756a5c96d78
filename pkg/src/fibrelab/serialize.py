"""JSON encoding of every artifact type.

Rationals are strings ``"p"`` or ``"p/q"``; vectors are lists of such
strings; table keys are vectors rendered as ``"(a,b)"``.  ``encode_*``
return plain JSON-compatible objects, ``decode_*`` invert them.
"""

from __future__ import annotations

import json
from typing import Any

from fibrelab.compatible import CompatibleModel, WorldVectorMap
from fibrelab.errors import StructureError
from fibrelab.feedforward import NetworkInstance, NeuralArchitecture
from fibrelab.fibred import ConstantRule, EdgeLabel, FibredNetwork, FibringArchitecture, SelfFibreRule, TableRule
from fibrelab.graphnets import FeaturedGraph, GatInstance, GnnInstance, TokenSequence
from fibrelab.linalg import (
    ActivationSpec,
    AttentionCombine,
    Hardmax,
    Identity,
    RMatrix,
    TruncatedReLU,
    format_rational,
    format_vector,
    parse_rational,
)
from fibrelab.modal import IN, ComponentId, FibredModel, KripkeComponent


def dumps(obj: Any) -> str:
    """Canonical text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def encode_vector(v) -> list:
    return [format_rational(c) for c in v]


def decode_vector(data) -> tuple:
    return tuple(parse_rational(str(c)) for c in data)


def parse_vector_key(text: str) -> tuple:
    inner = text.strip()
    if not (inner.startswith("(") and inner.endswith(")")):
        raise ValueError(f"bad vector key {text!r}")
    inner = inner[1:-1].strip()
    return tuple(parse_rational(p) for p in inner.split(",")) if inner else ()


def encode_matrix(m: RMatrix) -> list:
    return [encode_vector(r) for r in m.to_rows()]


def decode_matrix(data, cols: int | None = None) -> RMatrix:
    return RMatrix.from_rows([decode_vector(r) for r in data], cols)


# ---------------------------------------------------------------------------
# networks

_SIMPLE_KINDS = {"identity": Identity, "trelu": TruncatedReLU, "hardmax": Hardmax}


def encode_activation(spec: ActivationSpec) -> list:
    out = []
    for n, kind in spec.segments:
        if isinstance(kind, AttentionCombine):
            out.append({
                "kind": "attention",
                "length": n,
                "blocks": kind.block_count,
                "block_dim": kind.block_dim,
                "a": encode_vector(kind.attention_vector),
                "bias": encode_vector(kind.bias),
            })
        else:
            name = next(k for k, cls in _SIMPLE_KINDS.items() if isinstance(kind, cls))
            out.append({"kind": name, "length": n})
    return out


def decode_activation(data) -> ActivationSpec:
    segs = []
    for seg in data:
        if seg["kind"] == "attention":
            kind = AttentionCombine(seg["blocks"], seg["block_dim"], decode_vector(seg["a"]), decode_vector(seg["bias"]))
        elif seg["kind"] in _SIMPLE_KINDS:
            kind = _SIMPLE_KINDS[seg["kind"]]()
        else:
            raise ValueError(f"unknown activation kind {seg['kind']!r}")
        segs.append((seg["length"], kind))
    return ActivationSpec(tuple(segs))


def encode_architecture(arch: NeuralArchitecture) -> dict:
    return {"dims": list(arch.dims), "activations": [encode_activation(a) for a in arch.activations]}


def decode_architecture(data) -> NeuralArchitecture:
    return NeuralArchitecture(tuple(data["dims"]), tuple(decode_activation(a) for a in data["activations"]))


def encode_instance(inst: NetworkInstance) -> dict:
    return {
        "architecture": encode_architecture(inst.architecture),
        "weights": [encode_matrix(W) for W in inst.weights],
        "biases": [encode_vector(b) for b in inst.biases],
    }


def decode_instance(data) -> NetworkInstance:
    arch = decode_architecture(data["architecture"])
    weights = tuple(decode_matrix(W, arch.dims[i]) for i, W in enumerate(data["weights"]))
    return NetworkInstance(arch, weights, tuple(decode_vector(b) for b in data["biases"]))


# ---------------------------------------------------------------------------
# fibred networks


def encode_fibring(arch: FibringArchitecture) -> dict:
    return {
        "root": arch.root,
        "nodes": {v: encode_architecture(a) for v, a in arch.node_arch.items()},
        "edges": [
            {"parent": p, "child": c, "layer": lab.layer, "positions": list(lab.positions)}
            for (p, c), lab in sorted(arch.edges.items())
        ],
    }


def decode_fibring(data) -> FibringArchitecture:
    nodes = {v: decode_architecture(a) for v, a in data["nodes"].items()}
    edges = {(e["parent"], e["child"]): EdgeLabel(e["layer"], tuple(e["positions"])) for e in data["edges"]}
    return FibringArchitecture(data["root"], nodes, edges)


def encode_rule(rule) -> dict:
    if isinstance(rule, ConstantRule):
        return {"kind": "constant", "instance": encode_instance(rule.instance), "input": encode_vector(rule.input)}
    if isinstance(rule, SelfFibreRule):
        return {"kind": "self", "instance": encode_instance(rule.instance)}
    if isinstance(rule, TableRule):
        return {
            "kind": "table",
            "entries": {
                format_vector(k): {"instance": encode_instance(n), "input": encode_vector(y)}
                for k, (n, y) in sorted(rule.entries.items(), key=lambda kv: format_vector(kv[0]))
            },
        }
    raise TypeError(f"unknown rule kind {type(rule).__name__}")


def decode_rule(data):
    kind = data["kind"]
    if kind == "constant":
        return ConstantRule(decode_instance(data["instance"]), decode_vector(data["input"]))
    if kind == "self":
        return SelfFibreRule(decode_instance(data["instance"]))
    if kind == "table":
        return TableRule({
            parse_vector_key(k): (decode_instance(e["instance"]), decode_vector(e["input"]))
            for k, e in data["entries"].items()
        })
    raise ValueError(f"unknown rule kind {kind!r}")


def encode_rules(rules) -> list:
    return [{"parent": p, "child": c, "rule": encode_rule(r)} for (p, c), r in sorted(rules.items())]


def decode_rules(data) -> dict:
    return {(e["parent"], e["child"]): decode_rule(e["rule"]) for e in data}


def encode_fibred(fnet: FibredNetwork) -> dict:
    return {
        "root_instance": encode_instance(fnet.root_instance),
        "architecture": encode_fibring(fnet.architecture),
        "rules": encode_rules(fnet.rules),
    }


def decode_fibred(data) -> FibredNetwork:
    return FibredNetwork(decode_instance(data["root_instance"]), decode_fibring(data["architecture"]), decode_rules(data["rules"]))


# ---------------------------------------------------------------------------
# models


def _encode_cid(cid: ComponentId) -> str:
    return f"{cid.node},{'in' if cid.layer == IN else cid.layer}"


def _decode_cid(text: str) -> ComponentId:
    node, _, layer = text.rpartition(",")
    if not node:
        raise StructureError(f"bad component id {text!r}")
    return ComponentId(node, IN if layer == "in" else int(layer))


def encode_model(M: FibredModel) -> dict:
    comps = {}
    for cid, comp in sorted(M.components.items()):
        comps[_encode_cid(cid)] = {
            "worlds": list(comp.worlds),
            "relation": sorted([a, b] for a, b in comp.relation),
            "valuation": {w: sorted(comp.valuation[w]) for w in comp.worlds},
        }
    return {
        "components": comps,
        "jumps": sorted([_encode_cid(s), w, _encode_cid(t), v] for (s, w, t), v in M.jumps.items()),
        "provenance": sorted([_encode_cid(c), w, list(g)] for (c, w), g in M.provenance.items()),
        "parents": dict(sorted(M.parents.items())),
    }


def decode_model(data) -> FibredModel:
    comps = {
        _decode_cid(k): KripkeComponent(tuple(c["worlds"]), frozenset(tuple(p) for p in c["relation"]), c["valuation"])
        for k, c in data["components"].items()
    }
    jumps = {(_decode_cid(s), w, _decode_cid(t)): v for s, w, t, v in data.get("jumps", [])}
    prov = {(_decode_cid(c), w): tuple(g) for c, w, g in data.get("provenance", [])}
    return FibredModel(comps, jumps, prov, data.get("parents", {}))


def encode_compatible(C: CompatibleModel) -> dict:
    """Model plus a sidecar with the world-to-vector maps and node instances."""
    return {
        "model": encode_model(C.model),
        "sidecar": {
            "x": encode_vector(C.x),
            "offset": encode_vector(C.offset) if C.offset is not None else None,
            "maps": {_encode_cid(cid): {w: encode_vector(v) for w, v in m.to_vector.items()} for cid, m in sorted(C.maps.items())},
            "instances": {v: encode_instance(i) for v, i in sorted(C.instances.items())},
        },
    }


def decode_compatible(data) -> CompatibleModel:
    side = data["sidecar"]
    maps = {}
    for k, m in side["maps"].items():
        cid = _decode_cid(k)
        maps[cid] = WorldVectorMap(cid, {w: decode_vector(v) for w, v in m.items()})
    return CompatibleModel(
        decode_model(data["model"]),
        maps,
        {v: decode_instance(i) for v, i in side["instances"].items()},
        decode_vector(side["x"]),
        decode_vector(side["offset"]) if side.get("offset") is not None else None,
    )


# ---------------------------------------------------------------------------
# graph networks


def encode_graph(g: FeaturedGraph) -> dict:
    return {
        "nodes": list(g.nodes),
        "edges": sorted(sorted(e) for e in g.edges),
        "features": {v: encode_vector(g.features[v]) for v in g.nodes},
    }


def decode_graph(data) -> FeaturedGraph:
    return FeaturedGraph.build(data["nodes"], [tuple(e) for e in data["edges"]], {v: decode_vector(f) for v, f in data["features"].items()})


def encode_gnn(inst: GnnInstance) -> dict:
    out = {
        "A": [encode_matrix(m) for m in inst.A],
        "B": [encode_matrix(m) for m in inst.B],
        "b": [encode_vector(v) for v in inst.b],
    }
    if inst.attention is not None:
        out["a"] = [encode_vector(v) for v in inst.attention]
    return out


def decode_gnn(data) -> GnnInstance:
    dims = [len(data["A"][0][0])] if data["A"] and data["A"][0] else [0]
    A, B = [], []
    for l, (a, b) in enumerate(zip(data["A"], data["B"])):
        A.append(decode_matrix(a, dims[-1]))
        B.append(decode_matrix(b, dims[-1]))
        dims.append(A[-1].rows)
    bias = [decode_vector(v) for v in data["b"]]
    if "a" in data:
        return GatInstance(A, B, bias, [decode_vector(v) for v in data["a"]])
    return GnnInstance(A, B, bias)


def encode_sequence(seq: TokenSequence) -> dict:
    return {
        "tokens": list(seq.tokens),
        "vectors": {k: encode_vector(v) for k, v in sorted(seq.vec_table.items())},
        "positions": {str(t): encode_vector(seq.position(t)) for t in range(seq.length)},
    }


def decode_sequence(data) -> TokenSequence:
    pos = data.get("positions")
    table = {int(t): decode_vector(v) for t, v in pos.items()} if pos is not None else None
    return TokenSequence(tuple(data["tokens"]), {k: decode_vector(v) for k, v in data["vectors"].items()}, pos_table=table)
