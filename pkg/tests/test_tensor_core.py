import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from infharm.tensor_core import (ShapeError, as_mat, as_ten3, contract, null_proj_transpose,
                                 numerical_rank, projectors_batch, range_proj, svd_small)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
shapes = st.tuples(st.integers(1, 4), st.integers(1, 4))


@given(arrays(np.float64, shapes, elements=finite))
@settings(max_examples=60, deadline=None)
def test_svd_reconstructs_and_matches_lapack(M):
    U, s, V = svd_small(M)
    assert np.allclose(U @ np.diag(s) @ V.T, M, atol=1e-10 * (1 + np.abs(M).max()))
    assert np.all(np.diff(s) <= 1e-12)
    assert np.allclose(s, np.linalg.svd(M, compute_uv=False), atol=1e-10 * (1 + s.max(initial=0)))


@given(arrays(np.float64, shapes, elements=finite))
@settings(max_examples=60, deadline=None)
def test_projectors_are_complementary_orthogonal_projectors(M):
    Pt, Pn = range_proj(M), null_proj_transpose(M)
    I = np.eye(M.shape[0])
    for P in (Pt.matrix, Pn.matrix):
        assert np.allclose(P @ P, P, atol=1e-10)
        assert np.allclose(P, P.T, atol=1e-12)
    assert np.allclose(Pt.matrix + Pn.matrix, I)
    assert Pt.rank + Pn.rank == M.shape[0]
    assert np.allclose(Pn.matrix @ M, 0.0, atol=1e-9 * (1 + np.abs(M).max()))


def test_svd_of_swap_example():
    _, s, _ = svd_small([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
    assert s == pytest.approx([1.0, 1.0])


def test_normal_projector_of_planar_gradient():
    P = null_proj_transpose([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(P.matrix, np.diag([0.0, 0.0, 1.0]))
    assert P.rank == 1


def test_rank_tolerance_is_relative():
    assert numerical_rank([1.0, 1e-9]) == 1
    assert numerical_rank([1.0, 1e-7]) == 2
    assert numerical_rank([1e-20, 1e-29]) == 1
    assert numerical_rank([0.0, 0.0]) == 0


def test_batch_matches_single():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(7, 3, 2))
    Pt, Pn, r = projectors_batch(M)
    for k in range(7):
        assert np.allclose(Pt[k], range_proj(M[k]).matrix)
        assert r[k] == 2


def test_contract_shapes_and_frobenius():
    A = np.arange(6.0).reshape(3, 2)
    assert contract(A, A) == pytest.approx(np.sum(A * A))
    T = np.ones((3, 2, 2))
    assert contract(T, np.eye(2)).shape == (3,)
    with pytest.raises(ShapeError):
        contract(np.ones((2, 2)), np.ones((3, 3)))
    with pytest.raises(ShapeError):
        contract(np.ones(2), np.ones((2, 2)))


def test_validators():
    with pytest.raises(ShapeError):
        as_mat(np.ones(3))
    with pytest.raises(ValueError):
        as_mat([[np.nan]])
    with pytest.raises(ValueError):
        as_ten3(np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    assert as_ten3(np.zeros((1, 2, 2))).shape == (1, 2, 2)
