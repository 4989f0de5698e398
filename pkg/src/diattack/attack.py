"""Optimal Gaussian data-injection attacks.

Three constructions minimise the attacker's cost ``f`` (see
:func:`diattack.divergence.attack_cost`):

* :func:`full_attack` -- every measurement may be corrupted; closed form
  through a Lyapunov-type equation in the inverse covariance.
* :func:`single_measurement_attack` -- exactly one measurement.
* :func:`greedy_sparse_attack` -- k measurements chosen one at a time.

:func:`exhaustive_sparse_attack` is a brute-force baseline over all
k-subsets used to judge the greedy choice.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .divergence import attack_cost, shifted_precision
from .errors import (
    InfeasibleLambda,
    InfeasibleLambdaAtStep,
    NoFeasibleMeasurement,
    SingularOperator,
    TooManySubsets,
)
from .numkernel import COND_LIMIT, solve_sylvester_stationarity, sym

EIG_TOL = 1e-10
MAX_SUBSETS = 10_000


class NonConvexAtSolution(UserWarning):
    """The full-attack stationary point could not be certified as a minimum."""


@dataclass(frozen=True)
class GaussianAttack:
    """Attack ``a ~ N(mu, Sigma_aa)``; ``support`` lists the attacked sensors."""

    mu: np.ndarray
    Sigma_aa: np.ndarray
    support: tuple = field(default=None)

    def __post_init__(self):
        S = sym(np.atleast_2d(np.asarray(self.Sigma_aa, dtype=float)))
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        object.__setattr__(self, "Sigma_aa", S)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "support", tuple(int(j) for j in np.flatnonzero(np.diag(S) > 0)))

    @classmethod
    def zero(cls, m):
        return cls(np.zeros(m), np.zeros((m, m)))

    @classmethod
    def diagonal(cls, m, variances):
        """Independent attack with ``variances`` a mapping index -> variance."""
        S = np.zeros((m, m))
        for j, v in variances.items():
            S[j, j] = v
        return cls(np.zeros(m), S)

    @property
    def m(self):
        return self.mu.size

    @property
    def is_zero(self):
        return not (np.any(self.Sigma_aa) or np.any(self.mu))


@dataclass
class FeasibilityReport:
    """Outcome of every eigenvalue test that gates the constructions."""

    mu_zero_condition: bool
    eig_condition_1: bool = False
    eig_condition_2: bool = False
    hessian_condition: bool = False
    per_measurement_lambda_windows: list = field(default_factory=list)
    sparse_mean_condition: bool = False
    m2_regularized: bool = False
    stationarity_residual: float = math.nan
    hessian_min_eig: float = math.nan

    @property
    def status(self):
        if not (self.eig_condition_1 and self.eig_condition_2):
            return "infeasible"
        if self.hessian_condition:
            return "optimal"
        return "stationary point, convexity unverified"

    def summary(self):
        return {
            "mu_zero": self.mu_zero_condition,
            "cond_i": self.eig_condition_1,
            "cond_ii": self.eig_condition_2,
            "cond_iii": self.hessian_condition,
            "status": self.status,
        }


def _pd_margin(X):
    return EIG_TOL * max(1.0, float(np.abs(X).max(initial=0.0)))


def check_mean_condition(ctx):
    """True iff ``lam * M1 - M2`` is positive definite (zero mean is optimal)."""
    return bool(np.linalg.eigvalsh(ctx.lam * ctx.M1 - ctx.M2).min() > 1e-12)


def check_sparse_mean_condition(ctx):
    """The variant ``lam * M2^{-1} > Sigma_yy`` stated for sparse attacks.

    Written without inverting ``M2``: ``lam I - M2^{1/2} M1^{-1} M2^{1/2} > 0``.
    """
    w, V = np.linalg.eigh(ctx.M2)
    R = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    inner = R @ np.linalg.solve(ctx.M1, R)
    return bool(np.linalg.eigvalsh(ctx.lam * np.eye(ctx.m) - sym(inner)).min() > 1e-12)


def single_measurement_windows(ctx):
    """Open lambda windows ``(b/a, b^2/a^2)`` per measurement.

    Empty windows (``b <= a``) are still listed, with ``lower >= upper``.
    """
    a = np.diag(ctx.M1)
    b = np.diag(ctx.M2)
    return [(j, float(b[j] / a[j]), float((b[j] / a[j]) ** 2)) for j in range(ctx.m)]


def feasibility_report(ctx):
    return FeasibilityReport(
        mu_zero_condition=check_mean_condition(ctx),
        sparse_mean_condition=check_sparse_mean_condition(ctx),
        per_measurement_lambda_windows=single_measurement_windows(ctx),
    )


# -- full attack ------------------------------------------------------------------

def _invertible_m2(ctx):
    M2 = np.array(ctx.M2)
    if np.linalg.cond(M2) <= COND_LIMIT and np.linalg.eigvalsh(M2).min() > 0:
        return M2, False
    eps = 1e-10 * np.trace(M2) / ctx.m
    if eps <= 0:
        eps = 1e-10
    return M2 + eps * np.eye(ctx.m), True


def _full_attack_pieces(ctx, M2):
    lam, M1 = ctx.lam, ctx.M1
    M2_inv = np.linalg.inv(M2)
    S = M2 - lam * M1
    P = np.linalg.solve(M1, M2)
    Q = -lam * M1 @ M2_inv
    return S, P, Q, M2_inv


def stationarity_residual(Sigma, S, P, Q):
    """Residual of the symmetrized first-order condition at ``Sigma``."""
    return Sigma @ (S + S.T) @ Sigma + Sigma @ (Q + P.T) + (P + Q.T) @ Sigma


def relative_stationarity_residual(Sigma, S, P, Q):
    """Largest residual entry relative to the largest term of the condition."""
    scale = max(np.abs(Sigma @ (S + S.T) @ Sigma).max(), np.abs(Sigma @ (Q + P.T)).max(), 1e-300)
    return float(np.abs(stationarity_residual(Sigma, S, P, Q)).max() / scale)


def full_attack_hessian(ctx, Sigma, M2=None):
    """Second-derivative operator on ``vec(Sigma)`` of the full-attack cost."""
    M1, lam = ctx.M1, ctx.lam
    M2 = ctx.M2 if M2 is None else M2
    M1_inv = np.linalg.inv(M1)
    M2_inv = np.linalg.inv(M2)
    eye = np.eye(ctx.m)
    H = (
        2.0 * np.kron(Sigma, M2 - lam * M1)
        + np.kron(eye, M2 @ M1_inv + M1_inv @ M2)
        - lam * np.kron(M1 @ M2_inv + M2_inv @ M1, eye)
    )
    return sym(H)


def convexity_bound(ctx, Sigma, M2=None):
    """Upper bound on lambda below which the full-attack cost is certified convex."""
    M1 = ctx.M1
    M2 = ctx.M2 if M2 is None else M2
    M2_inv = np.linalg.inv(M2)
    eye = np.eye(ctx.m)
    num = np.linalg.eigvalsh(sym(np.kron(2.0 * Sigma, M2))).min()
    den = np.linalg.eigvalsh(sym(np.kron(2.0 * Sigma, M1) + np.kron(M1 @ M2_inv + M2_inv @ M1, eye))).max()
    return float(num / den)


def full_attack(ctx):
    """Optimal attack with access to every measurement.

    Returns
    -------
    attack : GaussianAttack
        Zero-mean attack whose covariance solves the stationarity equation.
    report : FeasibilityReport
        Conditions (i)-(iii), the mean condition and diagnostics.

    Raises
    ------
    InfeasibleLambda
        If condition (i) or (ii) fails; the report is attached as
        ``exc.report``.

    Warns
    -----
    NonConvexAtSolution
        If the convexity bound (iii) does not hold at the returned covariance.
    """
    report = feasibility_report(ctx)
    M2, report.m2_regularized = _invertible_m2(ctx)
    S, P, Q, _ = _full_attack_pieces(ctx, M2)
    ev1 = np.linalg.eigvals(P.T + Q)
    report.eig_condition_1 = bool(np.all(ev1.real > _pd_margin(P.T + Q)))
    report.eig_condition_2 = bool(np.linalg.eigvalsh(sym(S)).max() < -_pd_margin(S))
    if not (report.eig_condition_1 and report.eig_condition_2):
        failed = [name for name, ok in (("(i)", report.eig_condition_1), ("(ii)", report.eig_condition_2)) if not ok]
        exc = InfeasibleLambda(f"lambda={ctx.lam:g} violates condition {' and '.join(failed)}")
        exc.report = report
        raise exc

    X = solve_sylvester_stationarity(P, Q, S)
    if np.linalg.cond(X) > COND_LIMIT:
        raise SingularOperator("inverse attack covariance is singular")
    Sigma = sym(np.linalg.inv(X))
    if np.linalg.eigvalsh(Sigma).min() <= 0:
        exc = InfeasibleLambda("stationary covariance is not positive definite")
        exc.report = report
        raise exc
    Sigma = _polish_stationary(Sigma, S, P, Q)

    report.stationarity_residual = relative_stationarity_residual(Sigma, S, P, Q)
    report.hessian_min_eig = float(np.linalg.eigvalsh(full_attack_hessian(ctx, Sigma, M2)).min())
    report.hessian_condition = bool(ctx.lam < convexity_bound(ctx, Sigma, M2))
    if not report.hessian_condition:
        warnings.warn(
            f"lambda={ctx.lam:g}: convexity bound not met, result is a stationary point",
            NonConvexAtSolution,
            stacklevel=2,
        )
    return GaussianAttack(np.zeros(ctx.m), Sigma), report


def _polish_stationary(Sigma, S, P, Q, sweeps=3):
    """Newton steps on ``Sigma T Sigma + Sigma A + A^T Sigma = 0``.

    The inverse-covariance solve is exact in exact arithmetic; inversion can
    cost a few digits when ``Sigma`` is badly scaled, which this recovers.
    """
    T = S + S.T
    A = Q + P.T
    m = len(Sigma)
    eye = np.eye(m)
    best = Sigma
    best_res = np.abs(stationarity_residual(Sigma, S, P, Q)).max()
    for _ in range(sweeps):
        R = stationarity_residual(best, S, P, Q)
        # derivative: dS -> dS (T Sigma + A) + (Sigma T + A^T) dS
        left = best @ T + A.T
        right = T @ best + A
        op = np.kron(eye, left) + np.kron(right.T, eye)
        try:
            step = np.linalg.solve(op, -R.reshape(-1, order="F")).reshape(m, m, order="F")
        except np.linalg.LinAlgError:
            break
        cand = sym(best + step)
        res = np.abs(stationarity_residual(cand, S, P, Q)).max()
        if not res < best_res:
            break
        best, best_res = cand, res
    return best


# -- single-measurement and greedy sparse attacks ----------------------------------

def single_variance(a, b, lam):
    """Optimal variance on one measurement from an attack-free start, or None."""
    if not (b / a < lam < (b / a) ** 2):
        return None
    v = (b * b - lam * a * a) / ((lam * a - b) * a * b)
    return v if v > 0 else None


def scalar_step_cost(v, a, b, c, d, lam):
    """Cost increment of adding variance ``v`` on one measurement."""
    return lam * (v * a - math.log1p(v * c)) - v * b + math.log1p(v * d)


def step_variance(a, b, c, d, lam):
    """Optimal added variance for one measurement given the current attack.

    Returns ``(v, failed)`` where ``failed`` lists the violated inequalities
    (1: ``lam a > b``; 2: positive discriminant; 3: positive root).  The
    stationarity condition is ``alpha c d v^2 + beta v + gamma = 0`` with
    ``alpha = lam a - b``, ``beta = alpha (c + d) + c d (1 - lam)`` and
    ``gamma = alpha + d - lam c``; the larger root is the minimiser.
    """
    alpha = lam * a - b
    beta = alpha * (c + d) + c * d * (1.0 - lam)
    gamma = alpha + d - lam * c
    # gamma vanishes identically from an attack-free start; drop its rounding noise
    if abs(gamma) <= 1e-12 * (abs(lam * a) + abs(b) + abs(d) + abs(lam * c)):
        gamma = 0.0
    disc = beta * beta - 4.0 * alpha * c * d * gamma
    root = math.sqrt(disc) if disc > 0 else math.nan
    failed = tuple(
        n for n, ok in ((1, alpha > 0), (2, disc > 0), (3, -beta + root > 0)) if not ok
    )
    if failed:
        return None, failed
    if beta <= 0:
        v = (-beta + root) / (2.0 * alpha * c * d)
    else:
        v = 2.0 * gamma / (-beta - root)
    if not v > 0:
        return None, (3,)
    return v, ()


def _check_second_order(v, a, b, c, d, lam, rel=1e-4):
    f0 = scalar_step_cost(v, a, b, c, d, lam)
    slack = 1e-12 * max(1.0, abs(f0))
    return (
        scalar_step_cost(v * (1 - rel), a, b, c, d, lam) >= f0 - slack
        and scalar_step_cost(v * (1 + rel), a, b, c, d, lam) >= f0 - slack
    )


def single_measurement_attack(ctx, candidates=None):
    """Best attack on exactly one measurement.

    Returns
    -------
    attack : GaussianAttack
    index : int
        The attacked measurement (0-based).

    Raises
    ------
    NoFeasibleMeasurement
        If lambda lies outside every measurement's window.
    """
    a = np.diag(ctx.M1)
    b = np.diag(ctx.M2)
    idx = range(ctx.m) if candidates is None else sorted(candidates)
    best = None
    for j in idx:
        v = single_variance(a[j], b[j], ctx.lam)
        if v is None:
            continue
        attack = GaussianAttack.diagonal(ctx.m, {j: v})
        cost = attack_cost(ctx, attack.Sigma_aa)
        if best is None or cost < best[0]:
            best = (cost, j, attack)
    if best is None:
        raise NoFeasibleMeasurement(f"lambda={ctx.lam:g} lies outside every measurement window")
    return best[2], best[1]


@dataclass(frozen=True)
class GreedyStep:
    step: int
    index: int
    variance: float
    cost_after: float


def _step_coefficients(ctx, Sigma):
    W1 = shifted_precision(ctx.M1, Sigma)
    W2 = shifted_precision(ctx.M2, Sigma)
    return np.diag(ctx.M1), np.diag(ctx.M2), np.diag(W1), np.diag(W2)


def greedy_sparse_attack(ctx, k, candidates=None):
    """k-sparse attack built one measurement at a time.

    At each step every unattacked measurement gets its optimal added variance
    and the one giving the lowest total cost is kept (ties: lowest index).

    Parameters
    ----------
    ctx : AttackContext
    k : int
        Number of measurements to attack.
    candidates : iterable of int, optional
        Restrict the search to these measurement indices.

    Returns
    -------
    attack : GaussianAttack
    trace : list of GreedyStep
    """
    pool = list(range(ctx.m)) if candidates is None else sorted(set(candidates))
    if not 1 <= k <= len(pool):
        raise ValueError(f"k must lie in [1, {len(pool)}], got {k}")
    Sigma = np.zeros((ctx.m, ctx.m))
    chosen = []
    trace = []
    for step in range(1, k + 1):
        a, b, c, d = _step_coefficients(ctx, Sigma)
        best = None
        failures = {}
        for j in pool:
            if j in chosen:
                continue
            v, failed = step_variance(a[j], b[j], c[j], d[j], ctx.lam)
            if v is not None and step == 1:
                # attack-free start: use the closed form so k = 1 matches the single attack
                v = single_variance(a[j], b[j], ctx.lam) or v
            if v is None:
                failures[j] = failed
                continue
            if not _check_second_order(v, a[j], b[j], c[j], d[j], ctx.lam):
                failures[j] = ("second-order",)
                continue
            trial = Sigma.copy()
            trial[j, j] = v
            cost = attack_cost(ctx, trial)
            if best is None or cost < best[0]:
                best = (cost, j, v, trial)
        if best is None:
            raise InfeasibleLambdaAtStep(step, failures)
        cost, j, v, Sigma = best
        chosen.append(j)
        trace.append(GreedyStep(step, j, v, cost))
    return GaussianAttack(np.zeros(ctx.m), Sigma), trace


def _coordinate_descent(ctx, subset, tol=1e-10, max_sweeps=500):
    """Coordinate minimisation over the variances of ``subset``.

    Initialised by the one-at-a-time construction restricted to ``subset``;
    the result is never costlier than that starting point.  Returns None
    when the start itself is infeasible.
    """
    try:
        attack, _ = greedy_sparse_attack(ctx, len(subset), candidates=subset)
    except InfeasibleLambdaAtStep:
        return None
    start = np.array(attack.Sigma_aa)
    Sigma = start.copy()
    for _ in range(max_sweeps):
        change = 0.0
        for j in subset:
            other = Sigma.copy()
            other[j, j] = 0.0
            a, b, c, d = _step_coefficients(ctx, other)
            v, _ = step_variance(a[j], b[j], c[j], d[j], ctx.lam)
            if v is None:
                return start
            change = max(change, abs(v - Sigma[j, j]))
            Sigma[j, j] = v
        if change <= tol * float(np.diag(Sigma).max()):
            break
    return Sigma if attack_cost(ctx, Sigma) <= attack_cost(ctx, start) else start


def exhaustive_sparse_attack(ctx, k):
    """Best k-sparse independent attack over every k-subset of measurements."""
    if not 1 <= k <= ctx.m:
        raise ValueError(f"k must lie in [1, {ctx.m}], got {k}")
    if math.comb(ctx.m, k) > MAX_SUBSETS:
        raise TooManySubsets(f"C({ctx.m},{k}) exceeds {MAX_SUBSETS}")
    best = None
    for subset in itertools.combinations(range(ctx.m), k):
        if k == 1:
            v = single_variance(ctx.M1[subset[0], subset[0]], ctx.M2[subset[0], subset[0]], ctx.lam)
            if v is None:
                continue
            Sigma = np.zeros((ctx.m, ctx.m))
            Sigma[subset[0], subset[0]] = v
        else:
            Sigma = _coordinate_descent(ctx, list(subset))
            if Sigma is None:
                continue
        cost = attack_cost(ctx, Sigma)
        if best is None or cost < best[0]:
            best = (cost, Sigma)
    if best is None:
        raise InfeasibleLambda(f"no {k}-subset admits a feasible attack at lambda={ctx.lam:g}")
    return GaussianAttack(np.zeros(ctx.m), best[1])
