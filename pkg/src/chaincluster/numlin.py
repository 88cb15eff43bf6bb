"""Symmetric eigendecomposition and raw second-moment covariance.

Matrices up to ``JACOBI_MAX_N`` are diagonalized with cyclic-by-row
Jacobi rotations (compiled with numba). The rotation order is fixed, so
results are bit-identical between runs. Larger matrices go to LAPACK.
"""
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NumericalError, ValidationError

JACOBI_MAX_N = 512
OFF_TOL = 1e-12
MAX_SWEEPS = 100
SIGN_EPS = 1e-12


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray   # descending
    vectors: np.ndarray  # column j pairs with values[j]
    sweeps: int = 0


def check_symmetric(M, rtol=1e-10, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = np.abs(M).max() if M.size else 0.0
    if M.size and np.abs(M - M.T).max() > rtol * max(scale, np.finfo(float).tiny):
        raise ValidationError(f"{name} is not symmetric")
    return M


@njit(cache=True)
def _sweep(A, V):
    """One cyclic-by-row Jacobi sweep over all (p, q), p < q, in place."""
    n = A.shape[0]
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = A[p, q]
            if apq == 0.0:
                continue
            # |theta| may overflow to inf for denormal apq; t -> 0 then
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            for k in range(n):
                akp = A[k, p]
                akq = A[k, q]
                A[k, p] = c * akp - s * akq
                A[k, q] = s * akp + c * akq
            for k in range(n):
                apk = A[p, k]
                aqk = A[q, k]
                A[p, k] = c * apk - s * aqk
                A[q, k] = s * apk + c * aqk
            A[p, q] = 0.0
            A[q, p] = 0.0
            for k in range(n):
                vkp = V[k, p]
                vkq = V[k, q]
                V[k, p] = c * vkp - s * vkq
                V[k, q] = s * vkp + c * vkq


def _jacobi(M):
    n = M.shape[0]
    A = np.array(M, dtype=np.float64, order="C")
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if n < 2 or norm == 0.0:
        return np.diag(A).copy(), V, 0
    for sweep in range(1, MAX_SWEEPS + 1):
        _sweep(A, V)
        diag = np.diag(A).copy()
        # direct sum; sum(A^2) - sum(diag^2) cancels down to ~sqrt(eps)
        off = np.linalg.norm(A - np.diag(diag))
        if off <= OFF_TOL * norm:
            return diag, V, sweep
    raise NumericalError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps (n={n})")


def _canonical_signs(V):
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > SIGN_EPS)
        if idx.size and col[idx[0]] < 0:
            V[:, j] = -col
    return V


def sym_eig(M) -> EigenResult:
    """Full eigendecomposition of a symmetric matrix, values descending.

    Eigenvectors are orthonormal and sign-normalized so the first entry
    with magnitude above 1e-12 is positive.
    """
    M = check_symmetric(M)
    M = 0.5 * (M + M.T)
    n = M.shape[0]
    if n <= JACOBI_MAX_N:
        values, V, sweeps = _jacobi(M)
    else:
        values, V = np.linalg.eigh(M)
        sweeps = 0
    # stable sort keeps the deterministic ordering of equal eigenvalues
    order = np.argsort(-values, kind="stable")
    return EigenResult(values[order], _canonical_signs(V[:, order]), sweeps)


def sample_covariance(Y, center=False):
    """(1/T) * sum_t y_t y_t^T over the T columns of the N x T array ``Y``.

    No mean is subtracted unless ``center`` is set.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ValidationError("signals must be a 2-D array (nodes x instances)")
    T = Y.shape[1]
    if T == 0:
        raise ValidationError("need at least one signal instance (T >= 1)")
    if center:
        Y = Y - Y.mean(axis=1, keepdims=True)
    C = (Y @ Y.T) / T
    return 0.5 * (C + C.T)
