from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import mat, vec
from fibrelab.errors import DimensionError
from fibrelab.linalg import (
    ActivationSpec,
    AttentionCombine,
    Hardmax,
    Identity,
    RMatrix,
    TruncatedReLU,
    apply_activation,
    block_matrix,
    format_rational,
    format_vector,
    hardmax,
    hstack,
    mat_vec_mul_add,
    parse_rational,
    truncated_relu,
    vstack,
)

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=12)


def test_mat_vec_identity():
    assert mat_vec_mul_add(mat([[1, 0], [0, 1]]), vec(3, -2), vec(0, 0)) == vec(3, -2)


def test_mat_vec_exact_sum():
    assert mat_vec_mul_add(mat([[1, 1]]), (F(1, 2), F(1, 3)), (F(1, 6),)) == vec(1)


def test_mat_vec_zero_matrix_gives_bias():
    assert mat_vec_mul_add(RMatrix.zeros(1, 2), vec(5, 7), vec(-1)) == vec(-1)


def test_mat_vec_dimension_errors():
    with pytest.raises(DimensionError):
        mat_vec_mul_add(mat([[1, 1]]), vec(1), vec(0))
    with pytest.raises(DimensionError):
        mat_vec_mul_add(mat([[1, 1]]), vec(1, 2), vec(0, 0))


def test_truncated_relu_examples():
    assert truncated_relu((F(-2), F(1, 2), F(3))) == (0, F(1, 2), 1)
    assert truncated_relu(vec(0, 0)) == vec(0, 0)
    assert truncated_relu(vec(1, 1)) == vec(1, 1)


def test_hardmax_examples():
    assert hardmax(vec(1, 3, 3)) == (0, F(1, 2), F(1, 2))
    assert hardmax(vec(2)) == vec(1)
    assert hardmax(vec(0, 0, 0)) == (F(1, 3),) * 3
    with pytest.raises(DimensionError):
        hardmax(())


def test_activation_segments():
    assert apply_activation(ActivationSpec.uniform(2, Identity()), vec(4, -1)) == vec(4, -1)
    spec = ActivationSpec(((2, TruncatedReLU()), (1, Identity())))
    assert apply_activation(spec, vec(2, -1, -1)) == vec(1, 0, -1)
    with pytest.raises(DimensionError):
        apply_activation(spec, vec(1, 2))


def test_attention_combine_uniform():
    comb = AttentionCombine(3, 1, vec(0, 0), vec(0))
    # ties give weight 1/2 to B x_u = 5 and 1/2 to A x_w = 3
    assert apply_activation(ActivationSpec.uniform(3, comb), vec(5, 9, 3)) == vec(4, 0, 0)


def test_attention_combine_picks_best_score():
    # scores: self = a.(A x_u || B x_u) = 9 + 5, neighbour = 3 + 5
    comb = AttentionCombine(3, 1, vec(1, 1), vec(1))
    assert comb(vec(5, 9, 3)) == vec(6, 0, 0)
    comb = AttentionCombine(3, 1, vec(-1, 0), vec(0))
    assert comb(vec(5, 9, 3)) == vec(3, 0, 0)


def test_rational_text_roundtrip_and_rejects():
    assert parse_rational("3/6") == F(1, 2)
    assert format_rational(F(-4, 2)) == "-2"
    assert format_vector(vec(1, F(1, 2))) == "(1,1/2)"
    for bad in ("1/0", "1/-2", "x", "1.5"):
        with pytest.raises(ValueError):
            parse_rational(bad)


def test_block_helpers():
    I = RMatrix.identity(1)
    assert hstack([I, mat([[2]])]).to_rows() == [vec(1, 2)]
    assert vstack([I, mat([[2]])]).to_rows() == [vec(1), vec(2)]
    B = block_matrix([[I, None], [None, mat([[3]])]], [1, 1], [1, 1])
    assert B.to_rows() == [vec(1, 0), vec(0, 3)]


@settings(max_examples=300)
@given(st.lists(rationals, min_size=1, max_size=6), rationals)
def test_hardmax_properties(v, c):
    out = hardmax(v)
    assert sum(out) == 1
    k = sum(1 for a in out if a)
    assert all(a in (0, F(1, k)) for a in out)
    assert hardmax([x + c for x in v]) == out


@settings(max_examples=300)
@given(st.lists(rationals, min_size=1, max_size=6))
def test_truncated_relu_properties(v):
    out = truncated_relu(v)
    assert all(0 <= a <= 1 for a in out)
    assert all((a > 0) == (x > 0) for a, x in zip(out, v))


@settings(max_examples=200)
@given(st.lists(rationals, min_size=1, max_size=5))
def test_hardmax_activation_matches_function(v):
    assert apply_activation(ActivationSpec.uniform(len(v), Hardmax()), v) == hardmax(v)
