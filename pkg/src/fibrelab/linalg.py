"""Exact rational vectors, matrices and the activation maps built on them.

Scalars are :class:`fractions.Fraction`, which is always kept in lowest
terms with a positive denominator, so equality of vectors is plain tuple
equality.  Vectors are tuples of fractions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

from fibrelab.errors import DimensionError

Rational = Fraction
RVector = tuple  # tuple[Fraction, ...]

Number = Union[int, Fraction, str]

_RATIONAL_RE = re.compile(r"^\s*(-?\d+)(?:\s*/\s*(-?\d+))?\s*$")


def rational(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"cannot build an exact rational from {type(value).__name__}")


def parse_rational(text: str) -> Fraction:
    """Parse ``"p/q"`` or ``"p"``; the denominator must be positive."""
    m = _RATIONAL_RE.match(text)
    if m is None:
        raise ValueError(f"not a rational literal: {text!r}")
    num, den = m.group(1), m.group(2)
    if den is None:
        return Fraction(int(num))
    if int(den) <= 0:
        raise ValueError(f"denominator must be positive: {text!r}")
    return Fraction(int(num), int(den))


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def vector(values: Iterable[Number]) -> RVector:
    return tuple(rational(v) for v in values)


def zeros(n: int) -> RVector:
    return (Fraction(0),) * n


def format_vector(v: Sequence[Fraction]) -> str:
    """Canonical serialization, also used as the total order on vectors."""
    return "(" + ",".join(format_rational(x) for x in v) + ")"


def add(u: RVector, v: RVector) -> RVector:
    if len(u) != len(v):
        raise DimensionError(f"cannot add vectors of dims {len(u)} and {len(v)}")
    return tuple(a + b for a, b in zip(u, v))


def scale(c: Fraction, v: RVector) -> RVector:
    return tuple(c * a for a in v)


def dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    if len(u) != len(v):
        raise DimensionError(f"dot product of dims {len(u)} and {len(v)}")
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


@dataclass(frozen=True)
class RMatrix:
    """Dense row-major rational matrix.

    The shape is stored explicitly so that degenerate shapes stay
    well-defined.
    """

    rows: int
    cols: int
    entries: tuple = field(repr=False)

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise DimensionError("negative matrix shape")
        if len(self.entries) != self.rows * self.cols:
            raise DimensionError(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries, got {len(self.entries)}"
            )
        if not all(isinstance(e, Fraction) for e in self.entries):
            object.__setattr__(self, "entries", tuple(rational(e) for e in self.entries))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Number]], cols: int | None = None) -> "RMatrix":
        rows = [vector(r) for r in rows]
        if cols is None:
            if not rows:
                raise DimensionError("column count of an empty matrix is ambiguous")
            cols = len(rows[0])
        for r in rows:
            if len(r) != cols:
                raise DimensionError("ragged matrix rows")
        return cls(len(rows), cols, tuple(x for r in rows for x in r))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RMatrix":
        return cls(rows, cols, (Fraction(0),) * (rows * cols))

    @classmethod
    def identity(cls, n: int) -> "RMatrix":
        one, zero = Fraction(1), Fraction(0)
        return cls(n, n, tuple(one if i == j else zero for i in range(n) for j in range(n)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def row(self, i: int) -> RVector:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def to_rows(self) -> list[RVector]:
        return [self.row(i) for i in range(self.rows)]

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        return self.entries[i * self.cols + j]

    def matvec(self, x: Sequence[Fraction]) -> RVector:
        if len(x) != self.cols:
            raise DimensionError(f"matrix {self.rows}x{self.cols} applied to vector of dim {len(x)}")
        c = self.cols
        e = self.entries
        out = []
        for i in range(self.rows):
            base = i * c
            acc = Fraction(0)
            for j in range(c):
                w = e[base + j]
                if w:
                    acc += w * x[j]
            out.append(acc)
        return tuple(out)

    def scaled(self, c: Fraction) -> "RMatrix":
        return RMatrix(self.rows, self.cols, tuple(c * e for e in self.entries))


def hstack(mats: Sequence[RMatrix]) -> RMatrix:
    """Place matrices with equal row counts side by side."""
    if not mats:
        raise DimensionError("nothing to concatenate")
    rows = mats[0].rows
    if any(m.rows != rows for m in mats):
        raise DimensionError("hstack needs equal row counts")
    out = []
    for i in range(rows):
        for m in mats:
            out.extend(m.row(i))
    return RMatrix(rows, sum(m.cols for m in mats), tuple(out))


def vstack(mats: Sequence[RMatrix]) -> RMatrix:
    """Stack matrices with equal column counts on top of each other."""
    if not mats:
        raise DimensionError("nothing to concatenate")
    cols = mats[0].cols
    if any(m.cols != cols for m in mats):
        raise DimensionError("vstack needs equal column counts")
    return RMatrix(sum(m.rows for m in mats), cols, tuple(e for m in mats for e in m.entries))


def block_matrix(blocks: Sequence[Sequence[RMatrix | None]], row_dims: Sequence[int], col_dims: Sequence[int]) -> RMatrix:
    """Assemble a block matrix; ``None`` blocks are zero."""
    rows = []
    for bi, brow in enumerate(blocks):
        filled = [blk if blk is not None else RMatrix.zeros(row_dims[bi], col_dims[bj]) for bj, blk in enumerate(brow)]
        for blk, cd in zip(filled, col_dims):
            if blk.shape != (row_dims[bi], cd):
                raise DimensionError(f"block shape {blk.shape} does not fit ({row_dims[bi]}, {cd})")
        rows.append(hstack(filled))
    return vstack(rows)


def mat_vec_mul_add(W: RMatrix, x: Sequence[Fraction], b: Sequence[Fraction]) -> RVector:
    if W.cols != len(x):
        raise DimensionError(f"W has {W.cols} columns but x has dim {len(x)}")
    if W.rows != len(b):
        raise DimensionError(f"W has {W.rows} rows but b has dim {len(b)}")
    return tuple(a + c for a, c in zip(W.matvec(x), b))


# ---------------------------------------------------------------------------
# activations

_ZERO = Fraction(0)
_ONE = Fraction(1)


def truncated_relu(v: Sequence[Fraction]) -> RVector:
    return tuple(_ZERO if a < 0 else _ONE if a > 1 else a for a in v)


def hardmax(v: Sequence[Fraction]) -> RVector:
    """Spread mass 1 uniformly over the maximal entries."""
    if len(v) == 0:
        raise DimensionError("hardmax of an empty vector")
    top = max(v)
    k = sum(1 for a in v if a == top)
    share = Fraction(1, k)
    return tuple(share if a == top else _ZERO for a in v)


@dataclass(frozen=True)
class Identity:
    def __call__(self, v):
        return tuple(v)


@dataclass(frozen=True)
class TruncatedReLU:
    def __call__(self, v):
        return truncated_relu(v)


@dataclass(frozen=True)
class Hardmax:
    def __call__(self, v):
        return hardmax(v)


@dataclass(frozen=True)
class AttentionCombine:
    """Hard-attention aggregation over a block-structured slice.

    The slice is ``[B x_u | A x_u | A x_w1 | ... | A x_wk]`` with
    ``block_count = k + 2`` blocks of width ``block_dim``.  The first block
    of the result holds the attention-weighted sum plus ``bias``; the
    remaining coordinates are zeroed.
    """

    block_count: int
    block_dim: int
    attention_vector: RVector
    bias: RVector

    def __post_init__(self):
        if self.block_count < 2:
            raise DimensionError("attention needs at least the B-block and the self A-block")
        if len(self.attention_vector) != 2 * self.block_dim:
            raise DimensionError("attention vector must have length 2 * block_dim")
        if len(self.bias) != self.block_dim:
            raise DimensionError("bias must have length block_dim")

    def __call__(self, v):
        d = self.block_dim
        if len(v) != self.block_count * d:
            raise DimensionError(f"attention slice has dim {len(v)}, expected {self.block_count * d}")
        blocks = [tuple(v[i * d:(i + 1) * d]) for i in range(self.block_count)]
        own, msgs = blocks[0], blocks[1:]
        alpha = hardmax([dot(self.attention_vector, m + own) for m in msgs])
        # blocks[1] is A x_u, whose weight multiplies B x_u instead
        acc = list(self.bias)
        for j, (a, m) in enumerate(zip(alpha, msgs)):
            if a:
                src = own if j == 0 else m
                for i in range(d):
                    acc[i] += a * src[i]
        return tuple(acc) + zeros(len(v) - d)

    @property
    def length(self) -> int:
        return self.block_count * self.block_dim


ActivationKind = Union[Identity, TruncatedReLU, Hardmax, AttentionCombine]


@dataclass(frozen=True)
class ActivationSpec:
    """Concatenation of activation segments ``(length, kind)``."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((int(n), kind) for n, kind in self.segments)
        for n, kind in segs:
            if n < 0:
                raise DimensionError("negative segment length")
            if isinstance(kind, AttentionCombine) and n != kind.length:
                raise DimensionError(f"attention segment length {n} != {kind.length}")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def uniform(cls, n: int, kind: ActivationKind) -> "ActivationSpec":
        return cls(((n, kind),))

    @property
    def length(self) -> int:
        return sum(n for n, _ in self.segments)

    def is_identity(self) -> bool:
        return all(isinstance(k, Identity) for _, k in self.segments)


def apply_activation(spec: ActivationSpec, v: Sequence[Fraction]) -> RVector:
    if spec.length != len(v):
        raise DimensionError(f"activation covers {spec.length} coordinates, vector has {len(v)}")
    out: list[Fraction] = []
    pos = 0
    for n, kind in spec.segments:
        out.extend(kind(v[pos:pos + n]))
        pos += n
    return tuple(out)
