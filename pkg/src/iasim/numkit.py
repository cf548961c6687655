"""Small dense complex-matrix kernel.

Thin wrappers over LAPACK (via numpy) that add the contract checks and the
deterministic phase convention the rest of the package relies on: every
returned eigen/singular vector has its largest-magnitude entry real and
non-negative.
"""

import numpy as np

__all__ = [
    "ContractViolation",
    "DegenerateInputError",
    "SingularMatrixError",
    "NumericalFailureError",
    "hermitian_eig",
    "eig_general",
    "orthonormalize",
    "solve",
    "svd",
    "fix_phase",
    "projector",
    "projector_distance",
]

HERMITIAN_TOL = 1e-10
COND_LIMIT = 1e12


class ContractViolation(ValueError):
    """Input violates an operation's precondition (shape, symmetry, range)."""


class DegenerateInputError(ValueError):
    """Input is rank deficient where full rank is required."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix is singular or too badly conditioned to invert."""


class NumericalFailureError(RuntimeError):
    """An iterative numerical procedure failed to produce a result."""


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ContractViolation(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractViolation(f"{name} has non-finite entries")
    return A


def fix_phase(V):
    """Rotate each column so its largest-magnitude entry is real and >= 0.

    Returns the rotated copy and the unit-modulus phases that were removed
    (``V_out = V * conj(phases)``).
    """
    V = np.array(V, dtype=complex)
    idx = np.argmax(np.abs(V), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    return V * np.conj(phases), phases


def hermitian_eig(A):
    """Eigen-decomposition of a Hermitian matrix.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Hermitian matrix (max |A - A^*| <= 1e-10).

    Returns
    -------
    w : ndarray, shape (n,)
        Real eigenvalues, ascending.
    V : ndarray, shape (n, n)
        Unitary matrix of eigenvectors, column ``k`` pairs with ``w[k]``.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"hermitian_eig needs a square matrix, got {A.shape}")
    asym = np.max(np.abs(A - A.conj().T))
    if asym > HERMITIAN_TOL:
        raise ContractViolation(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    V, _ = fix_phase(V)
    return w, V


def eig_general(A):
    """Eigenvectors of a general square matrix.

    Eigenvalues are ordered by ascending magnitude, ties broken by ascending
    angle in (-pi, pi]. Each eigenvector has unit norm and follows the
    package phase convention.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"eig_general needs a square matrix, got {A.shape}")
    w, V = np.linalg.eig(A)
    order = np.lexsort((np.angle(w), np.round(np.abs(w), 12)))
    w = w[order]
    V = V[:, order]
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    V, _ = fix_phase(V)
    return w, V


def orthonormalize(A, d):
    """Orthonormal basis for the span of the first ``d`` columns of ``A``.

    The basis is the Q factor of a QR decomposition with positive real
    diagonal in R, which makes it unique.
    """
    A = _as_matrix(A)
    if d < 1 or A.shape[1] < d:
        raise ContractViolation(f"need at least d={d} columns, got {A.shape[1]}")
    if A.shape[0] < d:
        raise DegenerateInputError(f"cannot fit {d} orthonormal columns in dimension {A.shape[0]}")
    Q, R = np.linalg.qr(A[:, :d])
    diag = np.diag(R)
    mags = np.abs(diag)
    scale = max(np.max(mags), np.linalg.norm(A[:, :d]))
    if scale == 0 or np.min(mags) <= 1e-12 * scale:
        raise DegenerateInputError(f"rank of the first {d} columns is below {d}")
    return Q * (diag / mags)


def solve(A, B):
    """Solve ``A X = B`` for a square, well-conditioned ``A``."""
    A = _as_matrix(A)
    B = np.asarray(B, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"solve needs a square matrix, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ContractViolation(f"right-hand side has {B.shape[0]} rows, expected {A.shape[0]}")
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] >= COND_LIMIT:
        raise SingularMatrixError("matrix is singular or ill-conditioned")
    return np.linalg.solve(A, B)


def svd(A):
    """Full singular value decomposition ``A = U diag(s) V^*``.

    Returns ``(U, s, V)`` with ``s`` descending. Columns of ``U`` follow the
    phase convention; ``V`` columns absorb the matching rotation.
    """
    A = _as_matrix(A)
    U, s, Vh = np.linalg.svd(A, full_matrices=True)
    U, phases = fix_phase(U)
    V = Vh.conj().T
    k = len(s)
    V[:, :k] = V[:, :k] * np.conj(phases[:k])
    if V.shape[1] > k:
        V[:, k:], _ = fix_phase(V[:, k:])
    return U, s, V


def projector(Q):
    """Orthogonal projector onto the column span of ``Q``."""
    Q = orthonormalize(Q, np.asarray(Q).shape[1])
    return Q @ Q.conj().T


def projector_distance(A, B):
    """Frobenius distance between the projectors onto span(A) and span(B)."""
    return float(np.linalg.norm(projector(A) - projector(B)))
