import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delaysynth.errors import DecompositionError, DimensionMismatch
from delaysynth.matrix_core import (block_assemble, block_diag, he, identity_structure,
                                    real_jordan_form, selector)

EX1_A1 = np.array([[5, 3, 3, 2], [0, 2, -2, -2], [-1, -1, 3, 0], [1, 1, 1, 4]], dtype=float)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_defective_example_groups():
    jf = real_jordan_form(EX1_A1)
    assert jf.sizes == [3, 1]
    At = jf.transform(EX1_A1)
    assert np.abs(At[~jf.block_pattern()]).max() < 1e-8
    traces = [np.trace(At[g.span.start:g.span.stop, g.span.start:g.span.stop]) / g.size for g in jf.groups]
    assert traces == pytest.approx([4.0, 2.0], abs=1e-10)


def test_identity_is_single_group():
    jf = real_jordan_form(np.eye(3))
    assert jf.sizes == [3]
    np.testing.assert_allclose(jf.T, np.eye(3), atol=1e-12)


def test_random_separated_spectrum_reconstructs():
    rng = np.random.default_rng(3)
    V = rng.standard_normal((4, 4))
    A = V @ np.diag([-3.0, -1.0, 0.5, 2.0]) @ np.linalg.inv(V)
    jf = real_jordan_form(A)
    assert jf.sizes == [1, 1, 1, 1]
    D = jf.transform(A)
    np.testing.assert_allclose(jf.T @ D @ jf.T_inv, A, atol=1e-8)


def test_complex_pair_stays_real_block():
    A = np.array([[0.0, 1.0], [-2.0, -0.1]])
    jf = real_jordan_form(A)
    assert jf.sizes == [2]
    assert np.isrealobj(jf.T)


def test_condition_cap_raises():
    A = np.array([[1.0, 1e6], [0.0, 1.0 + 1e-3]])
    with pytest.raises(DecompositionError) as err:
        real_jordan_form(A, cond_cap=10.0)
    assert err.value.condition > 10.0


def test_identity_structure_fallback():
    jf = identity_structure(3)
    assert jf.sizes == [3] and jf.condition == 1.0


@pytest.mark.parametrize("span,n,expected", [
    (range(0, 3), 4, np.hstack([np.eye(3), np.zeros((3, 1))])),
    (range(0, 5), 5, np.eye(5)),
    (range(3, 4), 4, np.array([[0, 0, 0, 1.0]])),
])
def test_selector_examples(span, n, expected):
    np.testing.assert_array_equal(selector(span, n), expected)


def test_selector_out_of_range():
    with pytest.raises(DimensionMismatch):
        selector(range(2, 5), 4)


def test_block_assemble_examples():
    np.testing.assert_array_equal(block_assemble([[2.0, None], [None, 3.0]]), [[2, 0], [0, 3]])
    assert block_assemble([[np.eye(2), np.zeros((2, 2))]]).shape == (2, 4)
    A, Ad = np.ones((2, 2)), 2 * np.ones((2, 2))
    Mp = block_assemble([[[[A, Ad, np.zeros((2, 2))]]], [np.eye(6)]])
    assert Mp.shape == (8, 6)
    np.testing.assert_array_equal(Mp[2:], np.eye(6))


def test_block_assemble_mismatch():
    with pytest.raises(DimensionMismatch):
        block_assemble([[np.eye(2), np.eye(3)]])


def test_block_diag_and_he():
    np.testing.assert_array_equal(block_diag(np.eye(1), 2 * np.eye(1)), [[1, 0], [0, 2]])
    np.testing.assert_array_equal(he(np.array([[1.0, 2.0], [0.0, 1.0]])), [[2, 2], [2, 2]])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=5))
def test_selectors_partition_identity(sizes):
    n = sum(sizes)
    spans, s = [], 0
    for r in sizes:
        spans.append(range(s, s + r))
        s += r
    total = sum(selector(sp, n).T @ selector(sp, n) for sp in spans)
    np.testing.assert_array_equal(total, np.eye(n))


@given(arrays(float, (2, 2), elements=finite), arrays(float, (2, 3), elements=finite),
       arrays(float, (1, 2), elements=finite), arrays(float, (1, 3), elements=finite),
       arrays(float, (3, 5), elements=finite))
def test_block_assemble_nested_associative(a, b, c, d, e):
    flat = block_assemble([[a, b], [c, d], [e[:, :2], e[:, 2:]]])
    nested = block_assemble([[[[a, b], [c, d]]], [e]])
    np.testing.assert_array_equal(flat, nested)


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_jordan_block_diagonal_residual(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    try:
        jf = real_jordan_form(A)
    except DecompositionError:
        return
    assert sum(jf.sizes) == n
    starts = [g.span.start for g in jf.groups]
    assert starts == sorted(starts) and jf.groups[-1].span.stop == n
    D = jf.transform(A)
    assert np.abs(D[~jf.block_pattern()]).max(initial=0.0) <= 10 * 1e-6 * np.linalg.norm(A)
    np.testing.assert_allclose(jf.T @ jf.T_inv, np.eye(n), atol=1e-8)
