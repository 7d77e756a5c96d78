"""Plain feedforward architectures and their instances.

Vectors "at layer l" are pre-activations ``h^l``.  The activation of a
hidden layer is applied when leaving that layer, so spans can start and end
at any layer and splicing always happens on pre-activations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from fibrelab.errors import DimensionError, ShapeError
from fibrelab.linalg import (
    ActivationSpec,
    Identity,
    RMatrix,
    RVector,
    apply_activation,
    mat_vec_mul_add,
)


@dataclass(frozen=True)
class NeuralArchitecture:
    dims: tuple  # d_0 .. d_L
    activations: tuple  # ActivationSpec for layers 1 .. L-1

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(dims) < 2:
            raise ShapeError("an architecture needs at least one layer")
        if any(d < 1 for d in dims):
            raise ShapeError(f"layer dimensions must be positive: {dims}")
        if len(self.activations) != len(dims) - 2:
            raise ShapeError(f"expected {len(dims) - 2} hidden activations, got {len(self.activations)}")
        for layer, act in enumerate(self.activations, start=1):
            if act.length != dims[layer]:
                raise ShapeError(f"activation of layer {layer} covers {act.length} coordinates, layer has {dims[layer]}")

    @classmethod
    def linear(cls, dims: Sequence[int]) -> "NeuralArchitecture":
        return cls(tuple(dims), tuple(ActivationSpec.uniform(d, Identity()) for d in dims[1:-1]))

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def activation(self, layer: int) -> ActivationSpec:
        return self.activations[layer - 1]


@dataclass(frozen=True)
class NetworkInstance:
    architecture: NeuralArchitecture
    weights: tuple  # RMatrix per layer 1..L
    biases: tuple  # RVector per layer 1..L

    def __post_init__(self):
        arch = self.architecture
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(tuple(b) for b in self.biases))
        if len(self.weights) != arch.depth or len(self.biases) != arch.depth:
            raise ShapeError(f"instance has {len(self.weights)} weight layers for an architecture of depth {arch.depth}")
        for layer in range(1, arch.depth + 1):
            W, b = self.weights[layer - 1], self.biases[layer - 1]
            want = (arch.dims[layer], arch.dims[layer - 1])
            if W.shape != want:
                raise ShapeError(f"layer {layer} weights have shape {W.shape}, expected {want}")
            if len(b) != arch.dims[layer]:
                raise ShapeError(f"layer {layer} bias has dim {len(b)}, expected {arch.dims[layer]}")

    @property
    def depth(self) -> int:
        return self.architecture.depth

    @property
    def dims(self) -> tuple:
        return self.architecture.dims


@dataclass(frozen=True, order=True)
class LayerSpan:
    start: int
    stop: int

    def check(self, depth: int) -> None:
        if not 0 <= self.start <= self.stop <= depth:
            raise ShapeError(f"invalid span {self.start}->{self.stop} for depth {depth}")


def run_span(net: NetworkInstance, span: LayerSpan | tuple, v: Sequence[Fraction]) -> RVector:
    """Run layers ``start+1 .. stop`` on the pre-activation of layer ``start``.

    ``start == 0`` means ``v`` is the raw input.  Returns ``h^stop``.
    """
    start, stop = (span.start, span.stop) if isinstance(span, LayerSpan) else span
    LayerSpan(start, stop).check(net.depth)
    dims = net.dims
    if len(v) != dims[start]:
        raise DimensionError(f"span {start}->{stop} expects a vector of dim {dims[start]}, got {len(v)}")
    h = tuple(v)
    if start == stop:
        return h
    if start >= 1:
        h = apply_activation(net.architecture.activation(start), h)
    for layer in range(start + 1, stop + 1):
        h = mat_vec_mul_add(net.weights[layer - 1], h, net.biases[layer - 1])
        if layer < stop:
            h = apply_activation(net.architecture.activation(layer), h)
    return h


def run_network(net: NetworkInstance, x: Sequence[Fraction]) -> RVector:
    if len(x) != net.dims[0]:
        raise DimensionError(f"network expects input of dim {net.dims[0]}, got {len(x)}")
    return run_span(net, (0, net.depth), x)


def scalar_output(out: Sequence[Fraction]) -> Fraction:
    if len(out) != 1:
        raise ShapeError(f"classifier needs a scalar output, got dim {len(out)}")
    return out[0]


def classify(net: NetworkInstance, x: Sequence[Fraction]) -> bool:
    if net.architecture.output_dim != 1:
        raise ShapeError(f"classifier needs output dim 1, architecture has {net.architecture.output_dim}")
    return scalar_output(run_network(net, x)) > 0


def identity_instance(n: int) -> NetworkInstance:
    """One-layer identity network on dimension ``n``."""
    return NetworkInstance(NeuralArchitecture((n, n), ()), (RMatrix.identity(n),), ((Fraction(0),) * n,))


def constant_instance(input_dim: int, value: Sequence[Fraction]) -> NetworkInstance:
    """One-layer network returning ``value`` whatever the input."""
    value = tuple(value)
    return NetworkInstance(
        NeuralArchitecture((input_dim, len(value)), ()), (RMatrix.zeros(len(value), input_dim),), (value,)
    )
