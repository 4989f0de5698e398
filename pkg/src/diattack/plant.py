"""Open-loop plant, observer-based closed loop and its stationary moments."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, SingularCovariance, ValidationError
from .numkernel import (
    COND_LIMIT,
    is_psd,
    min_eig,
    solve_discrete_lyapunov,
    solve_transposed_discrete_lyapunov,
    spectral_radius,
    sym,
)


def _frozen(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


def block_diag(*blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time plant ``x+ = A x + B u + v_d``, ``y = C x + v_n``.

    ``Sigma_dd`` (n x n) is the process-disturbance covariance and
    ``Sigma_nn`` (m x m) the sensor-noise covariance, which must be positive
    definite so that the measurement covariance is invertible.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Sigma_dd: np.ndarray
    Sigma_nn: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "Sigma_dd", "Sigma_nn"):
            value = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if value.ndim != 2 or not np.all(np.isfinite(value)):
                raise DimensionMismatch(f"{name} must be a finite 2-D matrix")
            object.__setattr__(self, name, _frozen(value))
        n = self.A.shape[0]
        m = self.C.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.shape}")
        if self.C.shape != (m, n):
            raise DimensionMismatch(f"C must be {m}x{n}, got {self.C.shape}")
        if self.Sigma_dd.shape != (n, n):
            raise DimensionMismatch(f"Sigma_dd must be {n}x{n}")
        if self.Sigma_nn.shape != (m, m):
            raise DimensionMismatch(f"Sigma_nn must be {m}x{m}")
        if not is_psd(self.Sigma_dd):
            raise ValidationError("Sigma_dd not PSD")
        if not is_psd(self.Sigma_nn):
            raise ValidationError("Sigma_nn not PSD")
        if min_eig(self.Sigma_nn) <= 0.0:
            raise ValidationError("Sigma_nn not positive definite")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def p(self):
        """Number of control inputs."""
        return self.B.shape[1]


@dataclass(frozen=True)
class ClosedLoop:
    plant: PlantModel
    K: np.ndarray
    L: np.ndarray
    F: np.ndarray
    Sigma_xi: np.ndarray
    Sigma_yy: np.ndarray

    @property
    def n(self):
        return self.plant.n

    @property
    def m(self):
        return self.plant.m

    @property
    def Sigma_xx(self):
        return self.Sigma_xi[:self.n, :self.n]

    @property
    def injection(self):
        """The 2n x m map ``[0; L]`` through which sensor signals enter."""
        return np.vstack([np.zeros((self.n, self.m)), self.L])


@dataclass(frozen=True)
class AttackContext:
    """Everything an attack construction needs: ``M1``, ``M2`` and ``lam``."""

    M1: np.ndarray
    M2: np.ndarray
    lam: float

    def __post_init__(self):
        M1 = np.atleast_2d(np.asarray(self.M1, dtype=float))
        M2 = np.atleast_2d(np.asarray(self.M2, dtype=float))
        if M1.shape != M2.shape or M1.shape[0] != M1.shape[1]:
            raise DimensionMismatch("M1 and M2 must be square and of equal size")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise InvalidParameter(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "M1", _frozen(sym(M1)))
        object.__setattr__(self, "M2", _frozen(sym(M2)))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def m(self):
        return self.M1.shape[0]

    def with_lambda(self, lam):
        return AttackContext(self.M1, self.M2, lam)


def augmented_matrix(A, B, C, K, L):
    """``[[A, BK], [LC, A - LC + BK]]`` acting on (x, x_hat)."""
    return np.block([[A, B @ K], [L @ C, A - L @ C + B @ K]])


def build_closed_loop(plant, K, L):
    """Close the loop ``u = K x_hat`` with observer gain ``L``.

    Raises
    ------
    UnstableDynamics
        If the augmented transition matrix is not Schur stable.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, m, p = plant.n, plant.m, plant.p
    if K.shape != (p, n):
        raise DimensionMismatch(f"K must be {p}x{n}, got {K.shape}")
    if L.shape != (n, m):
        raise DimensionMismatch(f"L must be {n}x{m}, got {L.shape}")
    F = augmented_matrix(plant.A, plant.B, plant.C, K, L)
    Sigma_xi = solve_discrete_lyapunov(F, block_diag(plant.Sigma_dd, L @ plant.Sigma_nn @ L.T))
    Sxx = Sigma_xi[:n, :n]
    Sigma_yy = sym(plant.C @ Sxx @ plant.C.T + plant.Sigma_nn)
    return ClosedLoop(plant, _frozen(K), _frozen(L), _frozen(F), _frozen(Sigma_xi), _frozen(Sigma_yy))


def _check_attack_cov(cl, Sigma_aa):
    Sigma_aa = np.atleast_2d(np.asarray(Sigma_aa, dtype=float))
    if Sigma_aa.shape != (cl.m, cl.m):
        raise DimensionMismatch(f"Sigma_aa must be {cl.m}x{cl.m}")
    return Sigma_aa


def attacked_joint_covariance(cl, Sigma_aa):
    """Stationary covariance of (x_a, x_hat_a) under an attack of covariance ``Sigma_aa``."""
    Sigma_aa = _check_attack_cov(cl, Sigma_aa)
    if not np.any(Sigma_aa):
        return np.array(cl.Sigma_xi)
    pl = cl.plant
    drive = block_diag(pl.Sigma_dd, cl.L @ (pl.Sigma_nn + Sigma_aa) @ cl.L.T)
    return solve_discrete_lyapunov(cl.F, drive)


def attacked_measurement_covariance(cl, Sigma_aa):
    # attack-free state covariance plus the injected covariance
    return cl.Sigma_yy + _check_attack_cov(cl, Sigma_aa)


def _checked_inverse(S, name):
    if np.linalg.cond(S) > COND_LIMIT:
        raise SingularCovariance(f"{name} is numerically singular")
    return sym(np.linalg.inv(S))


def objective_matrices(cl):
    """Return ``(M1, M2)``.

    ``M1`` is the measurement precision and ``M2 = [0 L^T] X [0; L]`` where
    ``X`` sums ``(F^T)^n Sigma_xi^{-1} F^n`` over n >= 0.
    """
    M1 = _checked_inverse(cl.Sigma_yy, "Sigma_yy")
    Sxi_inv = _checked_inverse(cl.Sigma_xi, "Sigma_xi")
    X = solve_transposed_discrete_lyapunov(cl.F, Sxi_inv)
    G = cl.injection
    M2 = G.T @ X @ G
    assert M2.shape == (cl.m, cl.m)
    return M1, sym(M2)


def make_context(cl, lam):
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    M1, M2 = objective_matrices(cl)
    return AttackContext(M1, M2, lam)


def closed_loop_report(cl):
    """Plain-dict summary used by the ``synthesize`` subcommand."""
    M1, M2 = objective_matrices(cl)
    return {
        "K": cl.K.tolist(),
        "L": cl.L.tolist(),
        "spectral_radius": spectral_radius(cl.F),
        "Sigma_xi": cl.Sigma_xi.tolist(),
        "Sigma_yy": cl.Sigma_yy.tolist(),
        "M1": M1.tolist(),
        "M2": M2.tolist(),
    }
