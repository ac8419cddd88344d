import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ogbmatch.numlin import (DEFAULT_POLICY, DimensionError, NumericalError, RankPolicy,
                             column_compress, in_span, left_null_space, null_space,
                             parameterize_image, rank_of, solve_affine)


def test_underdetermined_min_norm():
    s = solve_affine(np.array([[1.0, 1.0]]), np.array([2.0]))
    assert s.feasible
    assert np.allclose(s.offset, [1, 1])
    assert s.dimension == 1
    assert abs(abs(s.basis[0, 0]) - 1 / np.sqrt(2)) < 1e-14


def test_inconsistent_is_reported():
    s = solve_affine(np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
    assert not s.feasible
    assert s.residual == pytest.approx(np.sqrt(2) / 2, rel=1e-12)
    assert s.offset == pytest.approx([1.5])


def test_zero_matrix():
    s = solve_affine(np.zeros((2, 3)), np.zeros(2))
    assert s.feasible and s.rank == 0 and s.dimension == 3


def test_shape_and_finite_checks():
    with pytest.raises(DimensionError):
        solve_affine(np.eye(2), np.ones(3))
    with pytest.raises(NumericalError):
        solve_affine(np.array([[np.inf]]), np.ones(1))
    with pytest.raises(DimensionError):
        rank_of(np.zeros((0, 3)))


def test_rank_policy():
    M = np.diag([1.0, 1e-9])
    assert rank_of(M) == 2
    assert rank_of(M, RankPolicy("absolute", 1e-6)) == 1
    assert rank_of(M, RankPolicy("relative", 1e-6)) == 1
    with pytest.raises(ValueError):
        RankPolicy("absolute")
    with pytest.raises(ValueError):
        RankPolicy("bogus")


def test_null_spaces(rng):
    M = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 6))
    N = null_space(M)
    assert N.shape == (6, 4) and np.max(np.abs(M @ N)) < 1e-12
    Lz = left_null_space(M)
    assert Lz.shape == (2, 4)
    assert np.max(np.abs(Lz @ M)) < 1e-12
    C = column_compress(M)
    assert C.shape == (4, 2) and in_span(C, M) < 1e-12


matrices = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(0, 7), st.integers(0, 2**31))


@settings(max_examples=60, derandomize=True)
@given(matrices)
def test_solution_set_properties(case):
    m, n, r, seed = case
    g = np.random.default_rng(seed)
    r = min(r, m, n)
    A = g.standard_normal((m, r)) @ g.standard_normal((r, n))
    b = A @ g.standard_normal(n)
    s = solve_affine(A, b)
    assert s.feasible
    assert np.linalg.norm(A @ s.offset - b) <= 1e-9 * max(1, np.linalg.norm(b))
    assert s.dimension == n - s.rank
    if s.dimension:
        assert np.allclose(s.basis.T @ s.basis, np.eye(s.dimension), atol=1e-12)
        assert np.max(np.abs(A @ s.basis)) < 1e-9 * max(1, np.linalg.norm(A))
        # Offset is the minimum-norm solution: orthogonal to the null space.
        assert np.max(np.abs(s.basis.T @ s.offset)) < 1e-9 * max(1, np.linalg.norm(s.offset))
        z = g.standard_normal(s.dimension)
        assert np.linalg.norm(A @ s.point(z) - b) <= 1e-8 * max(1, np.linalg.norm(b))


@settings(max_examples=60, derandomize=True)
@given(matrices, st.integers(1, 6))
def test_image_dimension_matches_independent_rank(case, p):
    m, n, r, seed = case
    g = np.random.default_rng(seed)
    r = min(r, m, n)
    A = g.standard_normal((m, r)) @ g.standard_normal((r, n))
    U = g.standard_normal((p, n))
    s = solve_affine(A, A @ g.standard_normal(n))
    img = parameterize_image(U, s)
    N_ref = scipy.linalg.null_space(A)
    expect = 0 if N_ref.size == 0 else np.linalg.matrix_rank(U @ N_ref)
    assert img.dimension == expect
    pts = np.column_stack([U @ s.point(g.standard_normal(s.dimension)) for _ in range(3)])
    B = img.basis
    assert in_span(B, pts - img.offset[:, None]) < 1e-10 * max(1, np.max(np.abs(pts)))


def test_default_policy_is_relative():
    assert DEFAULT_POLICY.mode == "relative"
