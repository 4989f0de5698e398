"""Gaussian KL divergences and the attack cost built from them.

All divergences are in nats.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPsdInput, SingularReference, SingularShift
from .numkernel import COND_LIMIT, is_psd, sym
from .plant import attacked_joint_covariance, attacked_measurement_covariance


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"mean has size {mean.size} but cov is {cov.shape}")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self):
        return self.mean.size


def _logdet_pd(S):
    sign, value = np.linalg.slogdet(S)
    return value if sign > 0 else -np.inf


def gaussian_kl(p, q):
    """``D(p || q)`` for two multivariate normals.

    ``q.cov`` must be positive definite; a singular ``p.cov`` gives ``inf``.
    """
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {q.dim}")
    try:
        chol = np.linalg.cholesky(sym(q.cov))
    except np.linalg.LinAlgError:
        raise SingularReference("reference covariance is not positive definite") from None
    if np.linalg.cond(q.cov) > COND_LIMIT:
        raise SingularReference("reference covariance is numerically singular")
    logdet_q = 2.0 * np.log(np.diag(chol)).sum()
    logdet_p = _logdet_pd(sym(p.cov))
    if not np.isfinite(logdet_p):
        return np.inf
    # tr(Sq^-1 Sp) and the Mahalanobis term through the Cholesky factor
    W = np.linalg.solve(chol, p.cov)
    W = np.linalg.solve(chol, W.T)
    diff = np.linalg.solve(chol, p.mean - q.mean)
    value = 0.5 * (logdet_q - logdet_p - p.dim + np.trace(W) + diff @ diff)
    return float(max(value, 0.0)) if value > -1e-10 else float(value)


def _xi_mean(cl, mu):
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if not np.any(mu):
        return np.zeros(2 * cl.n)
    drive = cl.injection @ mu
    return np.linalg.solve(np.eye(2 * cl.n) - cl.F, drive)


def disruption_kl(cl, attack):
    """``D(P_xi_a || P_xi)`` between attacked and nominal (x, x_hat) laws."""
    Sxa = attacked_joint_covariance(cl, attack.Sigma_aa)
    return gaussian_kl(
        GaussianSpec(_xi_mean(cl, attack.mu), Sxa),
        GaussianSpec(np.zeros(2 * cl.n), cl.Sigma_xi),
    )


def estimate_kl(cl, attack):
    """``D(P_xhat_a || P_xhat)``: the estimate marginals only."""
    n = cl.n
    Sxa = attacked_joint_covariance(cl, attack.Sigma_aa)
    mean = _xi_mean(cl, attack.mu)[n:]
    return gaussian_kl(
        GaussianSpec(mean, Sxa[n:, n:]),
        GaussianSpec(np.zeros(n), cl.Sigma_xi[n:, n:]),
    )


def detection_kl(cl, attack):
    """``D(P_y_a || P_y)`` between attacked and nominal measurement laws."""
    return gaussian_kl(
        GaussianSpec(attack.mu, attacked_measurement_covariance(cl, attack.Sigma_aa)),
        GaussianSpec(np.zeros(cl.m), cl.Sigma_yy),
    )


def _psd_sqrt(S):
    w, V = np.linalg.eigh(sym(S))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def logdet_i_plus(M, S):
    """``log|I + M S|`` for symmetric ``M`` and PSD ``S``.

    Evaluated as ``log|I + S^{1/2} M S^{1/2}|`` so the argument stays
    symmetric.
    """
    R = _psd_sqrt(S)
    sign, value = np.linalg.slogdet(np.eye(len(S)) + R @ M @ R)
    if sign <= 0:
        return -np.inf
    return value


def _check_cov(ctx, S, name):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != (ctx.m, ctx.m):
        raise DimensionMismatch(f"{name} must be {ctx.m}x{ctx.m}")
    if not is_psd(S, tol=1e-9):
        raise NonPsdInput(f"{name} is not positive semidefinite")
    return sym(S)


def attack_cost(ctx, Sigma_aa, mu_a=None):
    """Cost ``f`` minimised by the attacker (lower is better for the attacker)."""
    S = _check_cov(ctx, Sigma_aa, "Sigma_aa")
    mu = np.zeros(ctx.m) if mu_a is None else np.asarray(mu_a, dtype=float).reshape(-1)
    M1, M2, lam = ctx.M1, ctx.M2, ctx.lam
    detect = np.trace(M1 @ S) + mu @ M1 @ mu - logdet_i_plus(M1, S)
    disrupt = np.trace(M2 @ S) + mu @ M2 @ mu - logdet_i_plus(M2, S)
    return float(lam * detect - disrupt)


def cost_gradient(ctx, Sigma_aa):
    """Gradient of the zero-mean cost with respect to a symmetric ``Sigma_aa``."""
    S = _check_cov(ctx, Sigma_aa, "Sigma_aa")
    return sym(ctx.lam * (ctx.M1 - shifted_precision(ctx.M1, S)) - (ctx.M2 - shifted_precision(ctx.M2, S)))


def shifted_precision(M, S):
    """``(M^{-1} + S)^{-1}`` computed as ``(I + M S)^{-1} M`` (``M`` may be singular)."""
    op = np.eye(len(S)) + M @ S
    if np.linalg.cond(op) > COND_LIMIT:
        raise SingularShift("M^-1 + Sigma is singular")
    return sym(np.linalg.solve(op, M))


def _logdet_shift(W, D):
    # log|I + W D| with W SPD and D symmetric (possibly indefinite)
    R = _psd_sqrt(W)
    sign, value = np.linalg.slogdet(np.eye(len(D)) + R @ D @ R)
    if sign <= 0:
        raise SingularShift("I + (M^-1 + Sigma)^-1 Delta is not positive definite")
    return value


def incremental_cost(ctx, Sigma_base, Delta):
    """Cost change ``g(Delta) = f(Sigma_base + Delta) - f(Sigma_base)``."""
    S = _check_cov(ctx, Sigma_base, "Sigma_base")
    D = np.atleast_2d(np.asarray(Delta, dtype=float))
    if D.shape != S.shape:
        raise DimensionMismatch("Delta must match Sigma_base")
    D = sym(D)
    W1 = shifted_precision(ctx.M1, S)
    W2 = shifted_precision(ctx.M2, S)
    lam = ctx.lam
    return float(
        lam * (np.trace(ctx.M1 @ D) - _logdet_shift(W1, D))
        - np.trace(ctx.M2 @ D)
        + _logdet_shift(W2, D)
    )
