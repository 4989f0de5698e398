"""Likelihood-ratio attack detection and Monte-Carlo validation.

Random numbers come from numpy's counter-based ``Philox`` bit generator.  A
run seed is expanded with :class:`numpy.random.SeedSequence`; child streams
are spawned in a fixed order (calibration, false alarm, detection), so equal
seeds give bit-identical results.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAttack, InvalidParameter, SingularCovariance, UnstableDynamics
from .numkernel import COND_LIMIT, spectral_radius, sym
from .plant import attacked_measurement_covariance

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DetectorConfig:
    alpha_target: float = 0.05
    n_samples: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha_target <= 1.0:
            raise InvalidParameter(f"alpha must lie in (0, 1], got {self.alpha_target}")
        if self.n_samples < 1000:
            raise InvalidParameter(f"n_samples must be at least 1000, got {self.n_samples}")


@dataclass(frozen=True)
class DetectionResult:
    tau: float
    p_detect: float
    p_false_alarm: float
    n_samples: int

    @property
    def standard_error(self):
        return 0.5 / np.sqrt(self.n_samples)


def make_rng(seed, *key):
    """Philox generator for stream ``key`` under run seed ``seed``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _gaussian_logpdf(y, mean, cov):
    try:
        chol = np.linalg.cholesky(sym(cov))
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance is not positive definite") from None
    if np.linalg.cond(cov) > COND_LIMIT:
        raise SingularCovariance("covariance is numerically singular")
    z = np.linalg.solve(chol, (y - mean).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (np.sum(z * z, axis=0) + logdet + len(mean) * LOG_2PI)


def log_likelihood_ratio(y, cl, attack):
    """``log f_ya(y) - log f_y(y)``; ``y`` may be one vector or rows of vectors."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    if attack.is_zero:
        out = np.zeros(len(Y))
    else:
        cov_a = attacked_measurement_covariance(cl, attack.Sigma_aa)
        out = _gaussian_logpdf(Y, attack.mu, cov_a) - _gaussian_logpdf(Y, np.zeros(cl.m), cl.Sigma_yy)
    return float(out[0]) if single else out


def _draw(rng, mean, cov, n):
    w, V = np.linalg.eigh(sym(cov))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return mean + rng.standard_normal((n, len(mean))) @ root.T


def _null_samples(cl, rng, n):
    return _draw(rng, np.zeros(cl.m), cl.Sigma_yy, n)


def calibrate_threshold(cl, attack, cfg, rng=None):
    """Empirical ``1 - alpha`` quantile of the LLR under the attack-free law."""
    if attack.is_zero:
        raise DegenerateAttack("a zero attack gives a constant likelihood ratio")
    if cfg.alpha_target >= 1.0:
        return -np.inf
    rng = make_rng(cfg.seed, 0) if rng is None else rng
    llr = log_likelihood_ratio(_null_samples(cl, rng, cfg.n_samples), cl, attack)
    return float(np.quantile(llr, 1.0 - cfg.alpha_target))


def detection_probability(cl, attack, cfg, tau=None):
    """Monte-Carlo detection and false-alarm rates of the LRT at level alpha."""
    if tau is None:
        tau = calibrate_threshold(cl, attack, cfg, make_rng(cfg.seed, 0))
    n = cfg.n_samples
    null = _null_samples(cl, make_rng(cfg.seed, 1), n)
    cov_a = attacked_measurement_covariance(cl, attack.Sigma_aa)
    alt = _draw(make_rng(cfg.seed, 2), attack.mu, cov_a, n)
    p_fa = float(np.mean(log_likelihood_ratio(null, cl, attack) >= tau))
    p_d = float(np.mean(log_likelihood_ratio(alt, cl, attack) >= tau))
    return DetectionResult(float(tau), p_d, p_fa, n)


@dataclass(frozen=True)
class Trajectory:
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    def __iter__(self):
        return zip(self.x, self.xhat, self.y)

    @property
    def xi(self):
        return np.hstack([self.x, self.xhat])


def sample_stationary_trajectory(cl, attack, steps, seed, noise=True):
    """Simulate the attacked loop from rest.

    The sensor reading at step t is ``y(t) = C x(t) + v_n(t) + a(t)`` and
    feeds the observer update producing ``x_hat(t+1)``.  With
    ``noise=False`` disturbance and sensor noise are switched off, leaving
    the response to the attack alone.
    """
    if steps < 1:
        raise InvalidParameter("steps must be positive")
    rho = spectral_radius(cl.F)
    if rho >= 1.0:
        raise UnstableDynamics(f"spectral radius {rho:.6g} >= 1")
    pl = cl.plant
    n, m = pl.n, pl.m
    rng_d, rng_n, rng_a = (make_rng(seed, k) for k in (10, 11, 12))
    if noise:
        vd = _draw(rng_d, np.zeros(n), pl.Sigma_dd, steps)
        vn = _draw(rng_n, np.zeros(m), pl.Sigma_nn, steps)
    else:
        vd = np.zeros((steps, n))
        vn = np.zeros((steps, m))
    a = np.zeros((steps, m)) if attack.is_zero else _draw(rng_a, attack.mu, attack.Sigma_aa, steps)

    A, B, C, K, L = pl.A, pl.B, pl.C, cl.K, cl.L
    xs = np.empty((steps, n))
    xh = np.empty((steps, n))
    ys = np.empty((steps, m))
    x = np.zeros(n)
    xhat = np.zeros(n)
    for t in range(steps):
        y = C @ x + vn[t] + a[t]
        xs[t], xh[t], ys[t] = x, xhat, y
        u = K @ xhat
        x = A @ x + B @ u + vd[t]
        xhat = A @ xhat + B @ u + L @ (y - C @ xhat)
    return Trajectory(xs, xh, ys)
