"""Dense linear-algebra kernels used by the estimators.

Everything here works on small T x T or d x d matrices; the cross-section
never enters an eigenproblem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

RANK_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix that must be SPD or full rank is not.

    ``smallest_eigenvalue`` carries the offending eigenvalue when known.
    """

    def __init__(self, message: str, smallest_eigenvalue: float | None = None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


@dataclass(frozen=True)
class EigPairs:
    values: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    if vectors.shape[1] == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig_top(S: np.ndarray, k: int | None = None) -> EigPairs:
    """Top-``k`` eigenpairs of a symmetric matrix, eigenvalues descending.

    ``S`` is symmetrized before decomposition. ``k=None`` returns the full
    spectrum. Eigenvectors are sign-normalized so their largest-magnitude
    entry is positive.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    n = S.shape[0]
    if k is None:
        k = n
    if k < 0 or k > n:
        raise ValueError(f"requested {k} eigenpairs of a {n}x{n} matrix")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    if k == 0:
        return EigPairs(np.empty(0), np.empty((n, 0)))
    S = 0.5 * (S + S.T)
    w, v = np.linalg.eigh(S)
    # eigh is ascending; reversing keeps a stable order among ties
    w = w[::-1][:k]
    v = v[:, ::-1][:, :k]
    return EigPairs(w.copy(), _fix_signs(np.ascontiguousarray(v)))


def _check_full_rank(F: np.ndarray) -> None:
    if F.shape[1] == 0:
        return
    s = np.linalg.svd(F, compute_uv=False)
    if s[-1] <= RANK_TOL * max(s[0], 1.0) or F.shape[1] > F.shape[0]:
        raise SingularMatrixError(
            f"factor matrix of shape {F.shape} is rank deficient "
            f"(smallest singular value {s[-1]:.3e})",
            float(s[-1] ** 2),
        )


def projector(F: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of ``F``; zero when empty."""
    F = np.asarray(F, dtype=float)
    T = F.shape[0]
    if F.ndim != 2:
        raise ValueError("factor matrix must be two-dimensional")
    if F.shape[1] == 0:
        return np.zeros((T, T))
    _check_full_rank(F)
    # QR is better conditioned than forming (F'F)^{-1}
    q, _ = np.linalg.qr(F)
    return q @ q.T


def annihilator(F: np.ndarray) -> np.ndarray:
    """``M_F = I - F (F'F)^{-1} F'``; the identity when ``F`` has no columns."""
    F = np.asarray(F, dtype=float)
    return np.eye(F.shape[0]) - projector(F)


def solve_spd(A: np.ndarray, b: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A``.

    ``scale`` is the magnitude the eigenvalues are judged against; it
    defaults to the largest eigenvalue of ``A``.  Pass the size of the
    matrix ``A`` was derived from when cancellation can shrink all of ``A``.

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue of ``A`` is not above ``1e-12`` times
        ``scale`` (this includes indefinite and all-zero matrices).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
    A = 0.5 * (A + A.T)
    w = np.linalg.eigvalsh(A)
    ref = w[-1] if scale is None else max(float(scale), w[-1])
    if not (w[-1] > 0 and w[0] > RANK_TOL * ref):
        raise SingularMatrixError(
            f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e}, "
            f"largest {w[-1]:.3e})",
            float(w[0]),
        )
    return sla.cho_solve(sla.cho_factor(A), b)
