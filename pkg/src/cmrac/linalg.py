"""Small dense linear-algebra kernel.

Everything here targets the tiny matrices of single-input control problems
(n <= 10), so clarity wins over asymptotic cost: the Lyapunov equation is
solved through its Kronecker vectorization and symmetric eigenvalues come
from cyclic Jacobi rotations.
"""

import numpy as np

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class LinAlgError(ValueError):
    pass


class Singular(LinAlgError):
    pass


class NotHurwitz(LinAlgError):
    pass


class NotSymmetric(LinAlgError):
    pass


def _square(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    return M


def lu_factor(M):
    """LU factorization with partial pivoting.

    Returns ``(LU, perm, sign)`` where ``LU`` packs the unit-lower and upper
    factors, ``perm`` is the row permutation and ``sign`` the parity of the
    row swaps. Zero pivots are left in place; callers decide what is singular.
    """
    LU = _square(M).copy()
    n = LU.shape[0]
    perm = np.arange(n)
    sign = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        pivot = LU[k, k]
        if pivot == 0.0:
            continue
        LU[k + 1:, k] /= pivot
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm, sign


def det(M):
    """Determinant via partially pivoted LU; exactly 0.0 for a zero pivot."""
    LU, _, sign = lu_factor(M)
    return float(sign * np.prod(np.diag(LU)))


def linsolve(M, rhs):
    """Solve ``M x = rhs`` by Gaussian elimination with partial pivoting.

    Raises
    ------
    Singular
        If any pivot magnitude falls below ``PIVOT_TOL`` relative to the
        largest entry of ``M``.
    """
    M = _square(M)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (M.shape[0],):
        raise ValueError(f"rhs must have shape ({M.shape[0]},), got {rhs.shape}")
    LU, perm, _ = lu_factor(M)
    scale = max(np.max(np.abs(M)), 1.0)
    if np.min(np.abs(np.diag(LU))) < PIVOT_TOL * scale:
        raise Singular("matrix is singular to working precision")
    n = M.shape[0]
    y = rhs[perm].copy()
    for i in range(n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def sym_eig_bounds(M):
    """Smallest and largest eigenvalue of a symmetric matrix.

    Uses cyclic Jacobi rotations until the off-diagonal max-norm drops below
    ``JACOBI_TOL`` (relative to the matrix scale).
    """
    M = _square(M)
    asym = np.max(np.abs(M - M.T))
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(M))):
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance")
    D = 0.5 * (M + M.T)
    n = D.shape[0]
    scale = max(np.max(np.abs(D)), 1.0)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.abs(D - np.diag(np.diag(D)))
        if off.max(initial=0.0) < JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = D[p, q]
                if apq == 0.0:
                    continue
                tau = (D[q, q] - D[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # D <- J^T D J with J the (p, q) plane rotation
                Dp = D[:, p].copy()
                Dq = D[:, q].copy()
                D[:, p] = c * Dp - s * Dq
                D[:, q] = s * Dp + c * Dq
                Dp = D[p, :].copy()
                Dq = D[q, :].copy()
                D[p, :] = c * Dp - s * Dq
                D[q, :] = s * Dp + c * Dq
    eig = np.diag(D)
    return float(eig.min()), float(eig.max())


def solve_lyapunov(A_r, Q):
    """Solve ``A_r^T P + P A_r + Q = 0`` for symmetric positive definite P.

    The equation is vectorized to ``(I kron A_r^T + A_r^T kron I) vec(P) = -vec(Q)``
    (row-major vec) and solved with :func:`linsolve`.

    Raises
    ------
    NotHurwitz
        When the vectorized system is singular or the solution is not
        positive definite, i.e. ``A_r`` is not Hurwitz.
    """
    A_r = _square(A_r, "A_r")
    Q = _square(Q, "Q")
    n = A_r.shape[0]
    if Q.shape != (n, n):
        raise ValueError("A_r and Q must have the same shape")
    I = np.eye(n)
    # row-major vec: vec(X B) = (I kron B^T) vec(X), vec(B X) = (B kron I) vec(X)
    K = np.kron(A_r.T, I) + np.kron(I, A_r.T)
    try:
        vecP = linsolve(K, -Q.reshape(-1))
    except Singular as exc:
        raise NotHurwitz("A_r has an eigenvalue pair summing to zero") from exc
    P = vecP.reshape(n, n)
    P = 0.5 * (P + P.T)
    lo, _ = sym_eig_bounds(P)
    if lo <= 0.0:
        raise NotHurwitz("Lyapunov solution is not positive definite")
    return P
