"""Modal formulas read off networks: characteristic DNFs of scalar
classifiers and their lifting along a fibring tree."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from fibrelab.compatible import cube_points
from fibrelab.errors import ShapeError
from fibrelab.feedforward import NetworkInstance, classify
from fibrelab.fibred import FibringArchitecture
from fibrelab.linalg import RVector
from fibrelab.modal import IN, Box, ComponentId, Not, Prop, conjunction, disjunction


@dataclass(frozen=True)
class CharacteristicPredicate:
    """Classifier restricted to the (possibly shifted) Boolean cube of its inputs."""

    instance: NetworkInstance
    offset: RVector | None = None

    def __post_init__(self):
        if self.instance.architecture.output_dim != 1:
            raise ShapeError("characteristic formulas need a scalar-output network")
        if self.offset is not None and len(self.offset) != self.n:
            raise ShapeError(f"offset has dim {len(self.offset)}, network input is {self.n}")

    @property
    def n(self) -> int:
        return self.instance.architecture.input_dim

    def accepted(self, max_bits: int | None = None) -> list[RVector]:
        return [v for v in cube_points(self.n, self.offset, max_bits) if classify(self.instance, v)]


def _minterm(point: Sequence, offset: Sequence | None):
    lits = []
    for k, c in enumerate(point):
        on = c != (offset[k] if offset is not None else 0)
        lits.append(Prop(k + 1) if on else Not(Prop(k + 1)))
    return conjunction(lits)


def characteristic_formula(P: CharacteristicPredicate, max_bits: int | None = None):
    """DNF with one minterm per accepted cube point, in cube order; ``~T`` if none."""
    return disjunction([_minterm(v, P.offset) for v in P.accepted(max_bits)])


def _top_layer(arch: FibringArchitecture, node: str) -> int:
    kids = arch.children(node)
    if not kids:
        return IN
    return max(arch.label(node, c).layer for c in kids)


def psi_formula(phi, arch: FibringArchitecture, node: str | None = None):
    """Lift ``phi`` through the tree: box into each child's topmost splice component."""
    node = arch.root if node is None else node
    kids = arch.children(node)
    if not kids:
        return phi
    return conjunction([Box(ComponentId(c, _top_layer(arch, c)), psi_formula(phi, arch, c)) for c in kids])


def extract_theorem3_formula(compiled, max_bits: int | None = None):
    """Formula for a compiled graph network; depends only on (network, graph, node)."""
    P = CharacteristicPredicate(compiled.root_instance, compiled.offset)
    return psi_formula(characteristic_formula(P, max_bits), compiled.architecture)
