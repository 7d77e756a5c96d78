"""Graphviz DOT renderings of fibring trees, fibred models and unravellings."""

from __future__ import annotations

from fibrelab.fibred import FibringArchitecture
from fibrelab.modal import FibredModel


def _q(s) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def fibring_dot(arch: FibringArchitecture, name: str = "fibring") -> str:
    lines = [f"digraph {_q(name)} {{"]
    for v in arch.nodes():
        dims = ",".join(str(d) for d in arch.node_arch[v].dims)
        lines.append(f"  {_q(v)} [label={_q(f'{v} ({dims})')}];")
    for (p, c), lab in sorted(arch.edges.items()):
        label = f"({lab.layer}, {{{','.join(map(str, lab.positions))}}})"
        lines.append(f"  {_q(p)} -> {_q(c)} [label={_q(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def model_dot(M: FibredModel, name: str = "model") -> str:
    """One cluster per component; solid edges are accessibility, dashed edges are jumps."""
    lines = [f"digraph {_q(name)} {{", "  compound=true;"]
    for i, (cid, comp) in enumerate(sorted(M.components.items())):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_q(str(cid))};")
        for w in comp.worlds:
            props = ",".join(f"p{k}" for k in sorted(comp.valuation[w]))
            lines.append(f"    {_q(w)} [label={_q(f'{w} {{{props}}}')}];")
        for a, b in sorted(comp.relation):
            lines.append(f"    {_q(a)} -> {_q(b)};")
        lines.append("  }")
    for (s, w, t), v in sorted(M.jumps.items()):
        lines.append(f"  {_q(w)} -> {_q(v)} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def unravel_dot(tree, name: str = "unravel") -> str:
    lines = [f"digraph {_q(name)} {{"]
    for node, walk in tree.walks.items():
        label = "attention" if walk is None else "(" + ",".join(walk) + ")"
        shape = "box" if walk is None else "ellipse"
        lines.append(f"  {_q(node)} [label={_q(label)}, shape={shape}];")
    for node, kids in tree.children.items():
        for c in kids:
            lines.append(f"  {_q(node)} -> {_q(c)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
