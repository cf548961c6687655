import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iasim import numkit
from iasim.numkit import ContractViolation, DegenerateInputError, SingularMatrixError

from conftest import crandn

N_RANDOM = 1000


def _hermitian(rng, n):
    X = crandn(rng, n, n)
    return X + X.conj().T


def test_hermitian_eig_residuals_many_inputs():
    rng = np.random.default_rng(1)
    for _ in range(N_RANDOM):
        n = int(rng.integers(1, 7))
        A = _hermitian(rng, n)
        w, V = numkit.hermitian_eig(A)
        assert np.linalg.norm(A @ V - V * w) <= 1e-9 * max(1.0, np.linalg.norm(A))
        assert np.abs(V.conj().T @ V - np.eye(n)).max() <= 1e-10
        assert np.all(np.diff(w) >= 0)


def test_hermitian_eig_4x4_example():
    A = _hermitian(np.random.default_rng(4), 4)
    w, V = numkit.hermitian_eig(A)
    assert np.linalg.norm(A @ V - V * w) <= 1e-9 * max(1.0, np.linalg.norm(A))


def test_hermitian_eig_phase_convention():
    A = _hermitian(np.random.default_rng(5), 5)
    _, V = numkit.hermitian_eig(A)
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(5)]
    assert np.allclose(piv.imag, 0.0, atol=1e-15)
    assert np.all(piv.real >= 0)


def test_hermitian_eig_deterministic_and_shift_invariant():
    A = _hermitian(np.random.default_rng(6), 4)
    w1, V1 = numkit.hermitian_eig(A)
    w2, V2 = numkit.hermitian_eig(A.copy())
    assert np.array_equal(w1, w2) and np.array_equal(V1, V2)
    w3, V3 = numkit.hermitian_eig(A + 3.0 * np.eye(4))
    assert np.allclose(w3, w1 + 3.0, atol=1e-12)
    # eigenvectors of distinct eigenvalues are unique up to phase, which is fixed
    assert np.allclose(V3, V1, atol=1e-8)


def test_hermitian_eig_rejects_non_hermitian():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ContractViolation):
        numkit.hermitian_eig(A)
    with pytest.raises(ContractViolation):
        numkit.hermitian_eig(np.ones((2, 3)))
    with pytest.raises(ContractViolation):
        numkit.hermitian_eig(np.array([[np.nan]]))


def test_hermitian_eig_accepts_tiny_asymmetry():
    A = np.array([[1.0, 0.5 + 1e-12], [0.5, 2.0]])
    w, _ = numkit.hermitian_eig(A)
    assert w.shape == (2,)


def test_orthonormalize_residuals_and_span():
    rng = np.random.default_rng(2)
    for _ in range(N_RANDOM):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, n + 1))
        A = crandn(rng, n, d + 1)
        Q = numkit.orthonormalize(A, d)
        assert np.abs(Q.conj().T @ Q - np.eye(d)).max() <= 1e-10
        # same span: projecting the original columns onto Q loses nothing
        P = Q @ Q.conj().T
        assert np.linalg.norm(P @ A[:, :d] - A[:, :d]) <= 1e-9 * np.linalg.norm(A[:, :d])


def test_orthonormalize_4x2_example():
    A = crandn(np.random.default_rng(42), 4, 2)
    Q = numkit.orthonormalize(A, 2)
    assert np.abs(Q.conj().T @ Q - np.eye(2)).max() <= 1e-12


def test_orthonormalize_unique_basis():
    A = crandn(np.random.default_rng(3), 4, 2)
    R = np.array([[2.0, 1.0 + 1j], [0.0, 0.5]])
    # right-multiplying by an upper-triangular matrix with positive diagonal keeps Q
    assert np.allclose(numkit.orthonormalize(A, 2), numkit.orthonormalize(A @ R, 2), atol=1e-12)


def test_orthonormalize_rank_deficient():
    A = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(DegenerateInputError):
        numkit.orthonormalize(A, 2)
    with pytest.raises(DegenerateInputError):
        numkit.orthonormalize(np.ones((1, 2)), 2)
    with pytest.raises(ContractViolation):
        numkit.orthonormalize(np.ones((3, 1)), 2)


def test_solve_residuals():
    rng = np.random.default_rng(7)
    for _ in range(N_RANDOM):
        n = int(rng.integers(1, 7))
        A = crandn(rng, n, n) + n * np.eye(n)
        B = crandn(rng, n, 2)
        X = numkit.solve(A, B)
        assert np.linalg.norm(A @ X - B) <= 1e-8 * max(1.0, np.linalg.norm(B))


def test_solve_3x3_example():
    rng = np.random.default_rng(33)
    A, b = crandn(rng, 3, 3), crandn(rng, 3, 1)
    x = numkit.solve(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-8


def test_solve_singular():
    with pytest.raises(SingularMatrixError):
        numkit.solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones((2, 1)))
    with pytest.raises(SingularMatrixError):
        numkit.solve(np.diag([1.0, 1e-13]), np.ones((2, 1)))
    with pytest.raises(ContractViolation):
        numkit.solve(np.eye(2), np.ones((3, 1)))


def test_svd_residuals():
    rng = np.random.default_rng(8)
    for _ in range(N_RANDOM):
        p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        A = crandn(rng, p, q)
        U, s, V = numkit.svd(A)
        k = s.size
        assert np.linalg.norm(A - (U[:, :k] * s) @ V[:, :k].conj().T) <= 1e-9 * np.linalg.norm(A)
        assert np.abs(U.conj().T @ U - np.eye(p)).max() <= 1e-10
        assert np.abs(V.conj().T @ V - np.eye(q)).max() <= 1e-10
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_svd_2x4_example():
    A = crandn(np.random.default_rng(24), 2, 4)
    U, s, V = numkit.svd(A)
    assert U.shape == (2, 2) and V.shape == (4, 4) and s.shape == (2,)
    assert np.linalg.norm(A - (U * s) @ V[:, :2].conj().T) <= 1e-9 * np.linalg.norm(A)


def test_eig_general_residual_and_order():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        A = crandn(rng, n, n)
        w, V = numkit.eig_general(A)
        assert np.linalg.norm(A @ V - V * w) <= 1e-8 * max(1.0, np.linalg.norm(A))
        assert np.all(np.diff(np.round(np.abs(w), 12)) >= 0)
        assert np.allclose(np.linalg.norm(V, axis=0), 1.0)


def test_projector_distance():
    rng = np.random.default_rng(10)
    A = crandn(rng, 4, 2)
    assert numkit.projector_distance(A, A @ crandn(rng, 2, 2)) < 1e-10
    e1, e2 = np.eye(3)[:, :1], np.eye(3)[:, 1:2]
    assert numkit.projector_distance(e1, e2) == pytest.approx(np.sqrt(2.0))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**31 - 1), scale=st.floats(1e-3, 1e3))
def test_hermitian_eig_scale_equivariance(n, seed, scale):
    A = _hermitian(np.random.default_rng(seed), n)
    w1, _ = numkit.hermitian_eig(A)
    w2, _ = numkit.hermitian_eig(scale * A)
    assert np.allclose(w2, scale * w1, rtol=1e-9, atol=1e-9 * scale * max(1.0, np.abs(w1).max()))


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 5), q=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_svd_singular_values_match_eigenvalues(p, q, seed):
    A = crandn(np.random.default_rng(seed), p, q)
    _, s, _ = numkit.svd(A)
    w, _ = numkit.hermitian_eig(A @ A.conj().T)
    top = np.sort(w)[::-1][: s.size]
    assert np.allclose(s ** 2, np.clip(top, 0, None), atol=1e-9 * max(1.0, top.max()))
