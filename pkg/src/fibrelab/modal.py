"""Fibred modal formulas and their finite Kripke semantics.

A component is addressed by ``ComponentId(node, layer)``; layer ``IN``
(= 0) is the component holding a node's *inputs*, integer layers hold the
pre-activations spliced at that layer.

Formula text syntax::

    T | pK | ~phi | (phi & phi) | [node,layer]phi     with layer "in" or an integer >= 1
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence, Union

from fibrelab.errors import FormulaSyntaxError, StructureError, UnreachableJump

IN = 0


class ComponentId(NamedTuple):
    node: str
    layer: int = IN

    def __str__(self):
        return f"[{self.node},{'in' if self.layer == IN else self.layer}]"


# ---------------------------------------------------------------------------
# formulas


@dataclass(frozen=True)
class Prop:
    index: int


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class Box:
    component: ComponentId
    body: "Formula"

    def __post_init__(self):
        object.__setattr__(self, "component", ComponentId(*self.component))


Formula = Union[Prop, Top, And, Not, Box]

TOP = Top()
BOTTOM = Not(TOP)


def conjunction(parts: Sequence) -> object:
    """Left-nested conjunction; the empty conjunction is ``T``."""
    if not parts:
        return TOP
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disjunction(parts: Sequence) -> object:
    """``a | b`` encoded as ``~(~a & ~b)``; the empty disjunction is ``~T``."""
    if not parts:
        return BOTTOM
    if len(parts) == 1:
        return parts[0]
    return Not(conjunction([Not(p) for p in parts]))


def modal_depth(phi) -> int:
    if isinstance(phi, (Prop, Top)):
        return 0
    if isinstance(phi, Not):
        return modal_depth(phi.body)
    if isinstance(phi, And):
        return max(modal_depth(phi.left), modal_depth(phi.right))
    return 1 + modal_depth(phi.body)


def formula_size(phi) -> int:
    if isinstance(phi, (Prop, Top)):
        return 1
    if isinstance(phi, And):
        return 1 + formula_size(phi.left) + formula_size(phi.right)
    return 1 + formula_size(phi.body)


def print_formula(phi) -> str:
    if isinstance(phi, Prop):
        return f"p{phi.index}"
    if isinstance(phi, Top):
        return "T"
    if isinstance(phi, Not):
        return "~" + print_formula(phi.body)
    if isinstance(phi, And):
        return f"({print_formula(phi.left)} & {print_formula(phi.right)})"
    if isinstance(phi, Box):
        return f"{phi.component}{print_formula(phi.body)}"
    raise TypeError(f"not a formula: {phi!r}")


_NAME = re.compile(r"[A-Za-z0-9_./@:\-]+")
_PROP = re.compile(r"p(\d+)")


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.n = n
        self.pos = 0

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch: str):
        if self._peek() != ch:
            raise FormulaSyntaxError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def _name(self) -> str:
        self._skip()
        m = _NAME.match(self.text, self.pos)
        if m is None:
            raise FormulaSyntaxError("expected a node name", self.pos)
        self.pos = m.end()
        return m.group(0)

    def formula(self):
        ch = self._peek()
        start = self.pos
        if ch == "T":
            self.pos += 1
            return TOP
        if ch == "~":
            self.pos += 1
            return Not(self.formula())
        if ch == "(":
            self.pos += 1
            left = self.formula()
            self._expect("&")
            right = self.formula()
            self._expect(")")
            return And(left, right)
        if ch == "[":
            self.pos += 1
            node = self._name()
            self._expect(",")
            layer_text = self._name()
            if layer_text == "in":
                layer = IN
            elif layer_text.isdigit() and int(layer_text) >= 1:
                layer = int(layer_text)
            else:
                raise FormulaSyntaxError(f"bad layer tag {layer_text!r}", start)
            self._expect("]")
            return Box(ComponentId(node, layer), self.formula())
        if ch == "p":
            m = _PROP.match(self.text, self.pos)
            if m is None:
                raise FormulaSyntaxError("expected a proposition index", self.pos)
            index = int(m.group(1))
            if index < 1:
                raise FormulaSyntaxError("proposition indices start at 1", self.pos)
            if self.n is not None and index > self.n:
                raise FormulaSyntaxError(f"unknown proposition p{index} (n = {self.n})", self.pos)
            self.pos = m.end()
            return Prop(index)
        raise FormulaSyntaxError("unexpected input" if ch else "unexpected end of input", self.pos)


def parse_formula(text: str, n: int | None = None):
    p = _Parser(text, n)
    phi = p.formula()
    if p._peek():
        raise FormulaSyntaxError("trailing input", p.pos)
    return phi


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class KripkeComponent:
    worlds: tuple
    relation: frozenset
    valuation: Mapping[str, frozenset]
    _succ: Mapping[str, tuple] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        worlds = tuple(self.worlds)
        rel = frozenset((a, b) for a, b in self.relation)
        object.__setattr__(self, "worlds", worlds)
        object.__setattr__(self, "relation", rel)
        object.__setattr__(self, "valuation", {w: frozenset(self.valuation.get(w, ())) for w in worlds})
        ws = set(worlds)
        if len(ws) != len(worlds):
            raise StructureError("duplicate world ids in a component")
        succ: dict[str, list] = {w: [] for w in worlds}
        for a, b in rel:
            if a not in ws or b not in ws:
                raise StructureError(f"relation pair ({a}, {b}) leaves the component")
            succ[a].append(b)
        object.__setattr__(self, "_succ", {w: tuple(sorted(s)) for w, s in succ.items()})

    __hash__ = None

    def successors(self, w: str) -> tuple:
        return self._succ[w]


@dataclass(frozen=True)
class FibredModel:
    """Finite fibred Kripke model.

    ``jumps`` maps ``(source component, world, target component)`` to a world
    of the target.  ``provenance`` maps a non-input world to the candidate
    worlds of its node's input component that produced it, in tie-break
    order.  ``parents`` records the fibring tree so that jumps can be
    composed downwards.
    """

    components: Mapping[ComponentId, KripkeComponent]
    jumps: Mapping[tuple, str] = field(default_factory=dict)
    provenance: Mapping[tuple, tuple] = field(default_factory=dict)
    parents: Mapping[str, str | None] = field(default_factory=dict)
    _home: Mapping[str, ComponentId] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = {ComponentId(*c): k for c, k in self.components.items()}
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "jumps", {(ComponentId(*s), w, ComponentId(*t)): v for (s, w, t), v in self.jumps.items()})
        object.__setattr__(self, "provenance", {(ComponentId(*c), w): tuple(g) for (c, w), g in self.provenance.items()})
        object.__setattr__(self, "parents", dict(self.parents))
        home: dict[str, ComponentId] = {}
        for cid, comp in comps.items():
            for w in comp.worlds:
                if w in home:
                    raise StructureError(f"world {w!r} belongs to both {home[w]} and {cid}")
                home[w] = cid
        for (s, w, t), v in self.jumps.items():
            if home.get(w) != s:
                raise StructureError(f"jump source {w!r} is not a world of {s}")
            if home.get(v) != t:
                raise StructureError(f"jump target {v!r} is not a world of {t}")
        object.__setattr__(self, "_home", home)

    __hash__ = None

    def home(self, w: str) -> ComponentId:
        return self._home[w]

    def has_world(self, w: str) -> bool:
        return w in self._home

    def _path_down(self, src_node: str, tgt_node: str) -> list[str]:
        path = [tgt_node]
        while path[-1] != src_node:
            up = self.parents.get(path[-1])
            if up is None:
                raise UnreachableJump(f"{tgt_node!r} is not below {src_node!r}")
            path.append(up)
        return path[::-1]


def _pick(candidates: tuple, tie_break: str) -> str:
    if tie_break == "least":
        return candidates[0]
    if tie_break == "greatest":
        return candidates[-1]
    raise ValueError(f"unknown tie-break {tie_break!r}")


def resolve_jump(M: FibredModel, src: ComponentId, w: str, tgt: ComponentId, tie_break: str = "least") -> str:
    """World of ``tgt`` reached from ``w`` in ``src``.

    Uses a stored jump when there is one; otherwise goes back to the input
    world that produced ``w`` and composes stored jumps down the fibring
    tree through input components.
    """
    src, tgt = ComponentId(*src), ComponentId(*tgt)
    if src == tgt:
        raise ValueError("a jump needs distinct components")
    direct = M.jumps.get((src, w, tgt))
    if direct is not None:
        return direct
    if src.layer != IN:
        cands = M.provenance.get((src, w))
        if not cands:
            raise UnreachableJump(f"no provenance for {w!r} in {src}")
        w = _pick(cands, tie_break)
    cur = ComponentId(src.node, IN)
    for nxt in M._path_down(src.node, tgt.node)[1:]:
        step = ComponentId(nxt, IN)
        if (cur, w, step) not in M.jumps:
            raise UnreachableJump(f"no jump from {w!r} in {cur} to {step}")
        w, cur = M.jumps[(cur, w, step)], step
    if cur == tgt:
        return w
    if (cur, w, tgt) not in M.jumps:
        raise UnreachableJump(f"no jump from {w!r} in {cur} to {tgt}")
    return M.jumps[(cur, w, tgt)]


def check_satisfaction(M: FibredModel, at: tuple, phi, tie_break: str = "least") -> bool:
    """``M, w |= phi`` where ``at = (component, world)``."""
    comp, w = ComponentId(*at[0]), at[1]
    if M.home(w) != comp:
        raise StructureError(f"world {w!r} is not in {comp}")
    memo: dict = {}
    return _sat(M, comp, w, phi, tie_break, memo)


def _sat(M, comp, w, phi, tie_break, memo):
    key = (w, id(phi))
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(phi, Prop):
        res = phi.index in M.components[comp].valuation[w]
    elif isinstance(phi, Top):
        res = True
    elif isinstance(phi, Not):
        res = not _sat(M, comp, w, phi.body, tie_break, memo)
    elif isinstance(phi, And):
        res = _sat(M, comp, w, phi.left, tie_break, memo) and _sat(M, comp, w, phi.right, tie_break, memo)
    elif isinstance(phi, Box):
        target = phi.component
        if target == comp:
            res = all(_sat(M, comp, v, phi.body, tie_break, memo) for v in M.components[comp].successors(w))
        else:
            if target not in M.components:
                raise UnreachableJump(f"model has no component {target}")
            v = resolve_jump(M, comp, w, target, tie_break)
            res = _sat(M, target, v, phi, tie_break, memo)
    else:
        raise TypeError(f"not a formula: {phi!r}")
    memo[key] = res
    return res
