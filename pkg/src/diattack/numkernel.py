"""Dense linear-algebra kernels: Lyapunov, Sylvester-type and Riccati solvers.

All problem sizes in this package are tiny (d <= 12 for a 2n-dimensional
closed loop), so the matrix equations are solved by direct Kronecker
vectorization instead of Schur-based methods.  ``vec`` stacks columns.
"""

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NotStabilizable,
    SingularOperator,
    UnstableDynamics,
)

STABILITY_MARGIN = 1e-9
COND_LIMIT = 1e12


def vec(X):
    """Column-stacking vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, rows, cols=None):
    cols = rows if cols is None else cols
    return np.asarray(x).reshape(rows, cols, order="F")


def sym(X):
    return 0.5 * (X + X.T)


def as_square(X, name="matrix"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be square, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DimensionMismatch(f"{name} has non-finite entries")
    return X


def spectral_radius(F):
    """Largest eigenvalue modulus of a square matrix."""
    F = as_square(F, "F")
    return float(np.max(np.abs(np.linalg.eigvals(F))))


def min_eig(S):
    return float(np.linalg.eigvalsh(sym(S)).min())


def is_psd(S, tol=1e-10):
    S = np.asarray(S, dtype=float)
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(S).max(initial=0.0))):
        return False
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    return min_eig(S) >= -tol * scale


def _check_pair(F, Q):
    F = as_square(F, "F")
    Q = as_square(Q, "Q")
    if F.shape != Q.shape:
        raise DimensionMismatch(f"F is {F.shape} but Q is {Q.shape}")
    return F, Q


def _solve_refined(op, rhs):
    # one step of iterative refinement tightens residuals near 1e-15 relative
    x = np.linalg.solve(op, rhs)
    x += np.linalg.solve(op, rhs - op @ x)
    return x


def solve_discrete_lyapunov(F, Q):
    """Solve ``X = F X F^T + Q`` for a Schur-stable ``F``.

    Parameters
    ----------
    F : (d, d) array_like
        Transition matrix with spectral radius below ``1 - 1e-9``.
    Q : (d, d) array_like
        Symmetric driving term.

    Returns
    -------
    X : (d, d) ndarray
        The stationary covariance, symmetrized.
    """
    F, Q = _check_pair(F, Q)
    rho = spectral_radius(F)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise UnstableDynamics(f"spectral radius {rho:.12g} is not below 1")
    d = F.shape[0]
    op = np.eye(d * d) - np.kron(F, F)
    X = unvec(_solve_refined(op, vec(Q)), d)
    return sym(X)


def solve_transposed_discrete_lyapunov(F, Q):
    """Solve ``X = F^T X F + Q``, i.e. sum the series of (F^T)^n Q F^n."""
    F, Q = _check_pair(F, Q)
    return solve_discrete_lyapunov(F.T, Q)


def solve_sylvester_stationarity(P, Q, S):
    """Solve ``-(Q + P^T) X - X (P + Q^T) = S + S^T`` for symmetric ``X``.

    The equation is the symmetrized first-order condition of the full-attack
    cost written in the inverse attack covariance.  The operator is assembled
    as ``(Q + P^T) kron I + I kron (P^T + Q)`` acting on ``vec(X)``.
    """
    P = as_square(P, "P")
    Q = as_square(Q, "Q")
    S = as_square(S, "S")
    if not (P.shape == Q.shape == S.shape):
        raise DimensionMismatch("P, Q and S must share one shape")
    d = P.shape[0]
    T = Q + P.T
    eye = np.eye(d)
    op = np.kron(T, eye) + np.kron(eye, T)
    if not np.all(np.isfinite(op)) or np.linalg.cond(op) > COND_LIMIT:
        raise SingularOperator("Kronecker stationarity operator is singular")
    x = -_solve_refined(op, vec(S + S.T))
    return sym(unvec(x, d))


def solve_dare(A, B, Q, R, tol=1e-11, max_iter=100_000):
    """Discrete algebraic Riccati equation by fixed-point iteration.

    Iterates ``P <- A'PA - A'PB (R + B'PB)^{-1} B'PA + Q`` from ``P = Q``
    until successive iterates differ by at most ``tol * (1 + |P|_max)``.
    Raises :class:`NotStabilizable` when the induced gain does not make
    ``A + B K`` Schur stable and :class:`NoConvergence` when the iteration
    budget runs out.
    """
    A = as_square(A, "A")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = as_square(Q, "Q")
    R = as_square(R, "R")
    n = A.shape[0]
    if B.shape[0] != n or Q.shape[0] != n or R.shape[0] != B.shape[1]:
        raise DimensionMismatch("inconsistent DARE dimensions")
    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            BtP = B.T @ P
            gain = np.linalg.solve(R + BtP @ B, BtP @ A)
            P_next = sym(A.T @ P @ A - A.T @ P @ B @ gain + Q)
            if not np.all(np.isfinite(P_next)):
                raise NotStabilizable("Riccati iterates diverged")
            step = np.abs(P_next - P).max()
            P = P_next
            if step <= tol * (1.0 + np.abs(P).max()):
                break
        else:
            raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps")
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = spectral_radius(A + B @ K)
    if rho >= 1.0:
        raise NotStabilizable(f"closed loop spectral radius {rho:.6g} >= 1")
    return P
