"""Cyclic Jacobi eigensolver for small symmetric matrices, batched."""

import numpy as np

OFFDIAG_TOL = 1e-13
MAX_SWEEPS = 60


def jacobi_eigh(A, tol=OFFDIAG_TOL, vectors=False):
    """Eigen-decompose symmetric matrices of shape ``(..., n, n)``.

    Rotations are applied to the whole batch at once.  Iteration stops once
    the off-diagonal Frobenius mass of every matrix is below
    ``tol * ||A||_F``.  Eigenvalues come back sorted ascending; with
    ``vectors=True`` the matching eigenvectors are the columns of the second
    result.
    """
    A = np.array(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError("expected square matrices")
    n = A.shape[-1]
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    scale = np.sqrt(np.sum(A * A, axis=(-2, -1)))
    off_mask = ~np.eye(n, dtype=bool)

    for _ in range(MAX_SWEEPS):
        off = np.sqrt(np.sum(np.where(off_mask, A * A, 0.0), axis=(-2, -1)))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[..., p, q]
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    theta = (A[..., q, q] - A[..., p, p]) / (2.0 * apq)
                    t = np.where(theta < 0, -1.0, 1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(apq == 0.0, 0.0, np.where(np.isnan(t), 1.0, t))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c_ = c[..., None]
                s_ = s[..., None]
                colp = A[..., :, p].copy()
                colq = A[..., :, q].copy()
                A[..., :, p] = c_ * colp - s_ * colq
                A[..., :, q] = s_ * colp + c_ * colq
                rowp = A[..., p, :].copy()
                rowq = A[..., q, :].copy()
                A[..., p, :] = c_ * rowp - s_ * rowq
                A[..., q, :] = s_ * rowp + c_ * rowq
                A[..., p, q] = 0.0
                A[..., q, p] = 0.0
                vp = V[..., :, p].copy()
                vq = V[..., :, q].copy()
                V[..., :, p] = c_ * vp - s_ * vq
                V[..., :, q] = s_ * vp + c_ * vq

    w = np.diagonal(A, axis1=-2, axis2=-1)
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    if not vectors:
        return w
    V = np.take_along_axis(V, order[..., None, :], axis=-1)
    return w, V


def sym_eigenvalues(A):
    """Ascending eigenvalues ``mu_1 <= ... <= mu_n`` of symmetric ``A``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if A.ndim >= 2 and not np.any(A[..., ~np.eye(n, dtype=bool)]):
        # already diagonal (the finite-difference schemes build such batches)
        return np.sort(np.diagonal(A, axis1=-2, axis2=-1), axis=-1, kind="stable")
    return jacobi_eigh(A)
