"""Dense eigensolvers used by the spectral analysis."""
from __future__ import annotations

import numpy as np

from .errors import NumericalError, StructuralError


def jacobi_eigvalsh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation. An entry is left alone once it is negligible against both its
    diagonal partners (``|a_pq| <= eps sqrt|a_pp a_qq|``) or against the
    whole matrix (``|a_pq| <= tol ||A||_F``); iteration stops after a sweep
    with no rotations. Returns the eigenvalues in ascending order.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise StructuralError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol * scale or abs(apq) <= eps * np.sqrt(abs(A[p, p] * A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                rotated = True
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
        if not rotated:
            return np.sort(np.diag(A))
    raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps (n={n})")


def general_eigvals(A: np.ndarray) -> np.ndarray:
    """All eigenvalues of a square (real or complex) matrix via LAPACK ``geev``.

    ``geev`` balances, reduces to Hessenberg form and runs shifted QR
    (Francis double-shift in the real case).
    """
    A = np.asarray(A)
    A = A.astype(complex if np.iscomplexobj(A) else float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(A).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"QR iteration failed on {A.shape[0]}x{A.shape[0]} matrix: {exc}") from exc


def general_eig(A: np.ndarray):
    A = np.asarray(A)
    try:
        w, v = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"QR iteration failed: {exc}") from exc
    return w.astype(complex), v.astype(complex)
