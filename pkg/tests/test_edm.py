import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import eigh as scipy_eigh

from edmgan import edm
from edmgan.edm import (
    DimensionError,
    NotAnEDMError,
    PointSet,
    edm_from_gram,
    edm_from_points,
    embed,
    embedding_dimension,
    gram_from_edm,
    gram_from_inner,
    is_edm,
    relative_error,
    schoenberg_operator,
    spd_project,
    symmetrize,
)

from .conftest import random_rotation

COLLINEAR_D = np.array([[0.0, 1, 4], [1, 0, 1], [4, 1, 0]])
COLLINEAR_M = np.array([[0.0, 0, 0], [0, 1, 2], [0, 2, 4]])
VIOLATING_D = np.array([[0.0, 1, 9], [1, 0, 1], [9, 1, 0]])
SQUARE_D = np.array([[0.0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]])

finite = st.floats(-10, 10, allow_nan=False)


def test_symmetrize_examples(rng):
    assert np.array_equal(symmetrize([[0, 2], [0, 0]]), [[0, 1], [1, 0]])
    S = np.array([[1.0, 2], [2, 3]])
    assert np.array_equal(symmetrize(S), S)
    X = symmetrize(rng.standard_normal((5, 5)))
    assert np.array_equal(X - X.T, np.zeros((5, 5)))
    with pytest.raises(DimensionError):
        symmetrize(np.zeros((2, 3)))


def test_spd_project_zero_matrix():
    out = spd_project(np.zeros((4, 4)), "softplus_all")
    assert np.allclose(out, np.log(2) * np.eye(4), atol=1e-15)


def test_spd_project_diagonal_top_d():
    out = spd_project(np.diag([5.0, 3.0, 1.0, -2.0]), "softplus_top_d", 3)
    sp = np.log1p(np.exp([5.0, 3.0, 1.0]))
    assert np.allclose(out, np.diag([*sp, 0.0]), atol=1e-14)


def test_spd_project_kills_trailing_eigenvalues(rng):
    A = symmetrize(rng.standard_normal((6, 6)))
    w = scipy_eigh(spd_project(A, "softplus_top_d", 3), eigvals_only=True)
    assert np.all(np.abs(w[:3]) < 1e-10)
    assert np.all(w > -1e-12)


def test_spd_project_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        spd_project(np.full((3, 3), np.nan))


def test_gram_from_inner_examples(rng):
    assert np.array_equal(gram_from_inner([[1.0]]), [[0, 0], [0, 1]])
    assert np.array_equal(gram_from_inner(np.zeros((3, 3))), np.zeros((4, 4)))
    B = rng.standard_normal((6, 2))
    M = gram_from_inner(B @ B.T)
    s = np.linalg.svd(M, compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) == 2


def test_edm_from_gram_examples(rng):
    assert np.array_equal(edm_from_gram([[0.0, 0], [0, 1]]), [[0, 1], [1, 0]])
    assert np.allclose(edm_from_gram(COLLINEAR_M), COLLINEAR_D)
    M = rng.standard_normal((4, 4))
    M = M + M.T
    np.fill_diagonal(M, 0)
    D = edm_from_gram(M)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(D[off], -2 * M[off])


def test_gram_from_edm_examples():
    assert np.array_equal(gram_from_edm([[0.0, 1], [1, 0]]), [[0, 0], [0, 1]])
    assert np.allclose(gram_from_edm(COLLINEAR_D), COLLINEAR_M)


@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
def test_gram_edm_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((n - 1, 3))
    M = gram_from_inner(Y @ Y.T)
    assert np.max(np.abs(gram_from_edm(edm_from_gram(M)) - M)) < 1e-12 * max(1.0, np.abs(M).max())


def test_schoenberg_examples():
    B = schoenberg_operator([[0.0, 1], [1, 0]])
    assert np.allclose(B, [[0.25, -0.25], [-0.25, 0.25]])
    assert np.allclose(np.linalg.eigvalsh(B), [0, 0.5])
    tri = np.ones((3, 3)) - np.eye(3)
    B = schoenberg_operator(tri)
    assert np.allclose(B, 0.5 * edm.centering_matrix(3))
    assert np.allclose(np.linalg.eigvalsh(B), [0, 0.5, 0.5])
    assert np.array_equal(schoenberg_operator(np.zeros((4, 4))), np.zeros((4, 4)))


@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_schoenberg_kernel_contains_ones(n, seed):
    rng = np.random.default_rng(seed)
    D = rng.uniform(0, 5, (n, n))
    D = D + D.T
    np.fill_diagonal(D, 0)
    B = schoenberg_operator(D)
    assert np.allclose(B, B.T)
    assert np.max(np.abs(B.sum(1))) < 1e-10 * max(np.abs(D).max(), 1.0)


def test_is_edm_examples(rng):
    ok, _ = is_edm(edm_from_points(rng.standard_normal((10, 3))))
    assert ok
    ok, mu = is_edm(VIOLATING_D)
    assert not ok
    assert mu == pytest.approx(-5 / 6, abs=1e-12)  # exact value from sympy
    assert is_edm(np.zeros((3, 3))) == (True, 0.0)


@pytest.mark.parametrize("a", [0.0, 0.5, 1.0, 2.0, 3.5, 4.0])
def test_triangle_family_valid(a):
    D = np.array([[0.0, 1, a], [1, 0, 1], [a, 1, 0]])
    assert is_edm(D)[0]


@pytest.mark.parametrize("a", [4.01, 4.5, 6.0, 9.0, 100.0])
def test_triangle_family_invalid(a):
    D = np.array([[0.0, 1, a], [1, 0, 1], [a, 1, 0]])
    assert not is_edm(D)[0]


def test_embedding_dimension_examples():
    assert embedding_dimension(COLLINEAR_D) == 1
    assert embedding_dimension(SQUARE_D) == 2
    assert embedding_dimension(np.zeros((4, 4))) == 0
    with pytest.raises(NotAnEDMError):
        embedding_dimension(VIOLATING_D)


def test_embed_collinear():
    P = embed(COLLINEAR_D, 1)
    assert P.coords.shape == (3, 1)
    assert np.allclose(edm_from_points(P), COLLINEAR_D, atol=1e-12)


def test_embed_zero_matrix():
    P = embed(np.zeros((4, 4)), 3)
    assert np.allclose(P.coords, P.coords[0])


def test_embed_rejects_too_small_dimension():
    with pytest.raises(DimensionError):
        embed(SQUARE_D, 1)
    with pytest.raises(NotAnEDMError):
        embed(VIOLATING_D, 3)


def test_embed_pads_extra_dimensions():
    P = embed(COLLINEAR_D, 3)
    assert P.coords.shape == (3, 3)
    assert np.allclose(edm_from_points(P), COLLINEAR_D, atol=1e-12)


@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
def test_round_trip_points(n, seed):
    rng = np.random.default_rng(seed)
    D = edm_from_points(rng.standard_normal((n, 3)) * 2)
    assert relative_error(edm_from_points(embed(D, 3)), D) < 1e-8


def test_round_trip_n19(rng):
    D = edm_from_points(rng.standard_normal((19, 3)))
    assert relative_error(edm_from_points(embed(D, 3)), D) < 1e-8


def test_edm_from_points_examples(rng):
    assert np.array_equal(edm_from_points(PointSet([[0.0], [1.0]])), [[0, 1], [1, 0]])
    X = rng.standard_normal((7, 3))
    Y = X @ random_rotation(rng).T + rng.standard_normal(3)
    assert np.allclose(edm_from_points(X), edm_from_points(Y), atol=1e-12)
    D = edm_from_points(X)
    assert np.all(np.diag(D) == 0) and np.array_equal(D, D.T)


@given(arrays(np.float64, (6, 6), elements=finite))
def test_constructive_validity(X):
    L = spd_project(symmetrize(X), "softplus_top_d", 3)
    D = edm_from_gram(gram_from_inner(L))
    B = schoenberg_operator(D)
    mu = scipy_eigh(B, eigvals_only=True)
    assert mu[0] >= -1e-9 * max(np.trace(B), 0)
    assert embedding_dimension(D) <= 3


def test_sym_eig_convention(rng):
    A = symmetrize(rng.standard_normal((5, 5)))
    spec = edm.sym_eig(A)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    for lam, u in zip(spec.eigenvalues, spec.eigenvectors.T):
        assert np.allclose(A @ u, lam * u, atol=1e-8 * np.linalg.norm(A, 2))
        assert u[np.argmax(np.abs(u))] > 0
