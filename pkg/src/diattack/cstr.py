"""Two continuously stirred tank reactors in series.

Units: concentrations in kmol/m³, temperatures in K, flows in m³/h, volumes
in m³, heat rates in kJ/h and time in hours.  The tabulated feed
concentration of 4e3 mol/m³ is stored as 4.0 kmol/m³ so that it matches the
units of the rate law.

State order is ``(CA1, T1, CA2, T2)`` and input order is
``(CA10, Q1, CA20, Q2)``.  Linear models act on deviations from the refined
steady state.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    InvalidParameter,
    NewtonDiverged,
    NonPhysicalState,
    NotAnEquilibrium,
    NotDetectable,
    NotStabilizable,
    UnstableDynamics,
)
from .numkernel import solve_dare, spectral_radius
from .plant import PlantModel, build_closed_loop

# k0 may be zero, which leaves a pure transport balance
_POSITIVE = ("T10", "T20", "F10", "F20", "VL1", "VL2", "Cp", "R", "rhoL", "E",
             "CA10s", "CA20s", "T1s", "T2s", "CA1s", "CA2s")


@dataclass(frozen=True)
class CstrParams:
    """Physical parameters and tabulated steady state.

    Attributes
    ----------
    T10, T20 : float
        Inlet temperatures (K).
    F10, F20 : float
        Inlet flow rates (m³/h).
    VL1, VL2 : float
        Liquid volumes (m³).
    k0 : float
        Pre-exponential factor (m³/kmol/h).
    dH : float
        Reaction enthalpy (kJ/kmol), negative for an exothermic reaction.
    Cp : float
        Heat capacity (kJ/kg/K).
    R : float
        Gas constant (kJ/kmol/K).
    rhoL : float
        Liquid density (kg/m³).
    E : float
        Activation energy (kJ/kmol).
    CA10s, CA20s : float
        Steady feed concentrations (kmol/m³).
    Q1s, Q2s : float
        Steady jacket heat rates (kJ/h).
    T1s, T2s, CA1s, CA2s : float
        Tabulated steady state, used as the Newton starting point.
    """

    T10: float = 300.0
    T20: float = 300.0
    F10: float = 5.0
    F20: float = 5.0
    VL1: float = 1.0
    VL2: float = 1.0
    k0: float = 8.46e6
    dH: float = -1.15e4
    Cp: float = 0.231
    R: float = 8.314
    rhoL: float = 1e3
    E: float = 5e4
    CA10s: float = 4.0
    CA20s: float = 4.0
    Q1s: float = 0.0
    Q2s: float = 0.0
    T1s: float = 401.9
    T2s: float = 401.9
    CA1s: float = 1.954
    CA2s: float = 1.954

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise InvalidParameter(f"{name} must be finite")
            object.__setattr__(self, name, float(value))
        for name in _POSITIVE:
            if getattr(self, name) <= 0.0:
                raise InvalidParameter(f"{name} must be positive")
        if self.k0 < 0.0:
            raise InvalidParameter("k0 must be non-negative")

    def steady_inputs(self):
        return np.array([self.CA10s, self.Q1s, self.CA20s, self.Q2s])

    def nominal_state(self):
        return CstrState(self.CA1s, self.T1s, self.CA2s, self.T2s)


@dataclass(frozen=True)
class CstrState:
    CA1: float
    T1: float
    CA2: float
    T2: float

    def __post_init__(self):
        if min(self.CA1, self.CA2) < 0.0:
            raise NonPhysicalState("concentrations must be non-negative")
        if min(self.T1, self.T2) <= 0.0:
            raise NonPhysicalState("temperatures must be positive")

    def as_array(self):
        return np.array([self.CA1, self.T1, self.CA2, self.T2])

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in np.asarray(x, dtype=float).reshape(4)))


def _state_vector(state):
    x = state.as_array() if isinstance(state, CstrState) else np.asarray(state, dtype=float).reshape(4)
    if x[1] <= 0.0 or x[3] <= 0.0:
        raise NonPhysicalState(f"temperatures must be positive, got T1={x[1]}, T2={x[3]}")
    return x


def _rates(x, p):
    """Reaction rates and their partial derivatives in C and T for both tanks."""
    out = []
    for C, T in ((x[0], x[1]), (x[2], x[3])):
        arr = p.k0 * np.exp(-p.E / (p.R * T))
        r = arr * C * C
        out.append((r, 2.0 * arr * C, r * p.E / (p.R * T * T)))
    return out


def cstr_derivative(state, u, params):
    """Time derivative of ``(CA1, T1, CA2, T2)`` in units per hour.

    Parameters
    ----------
    state : CstrState or array_like
        Absolute state.
    u : array_like
        Absolute inputs ``(CA10, Q1, CA20, Q2)``.
    params : CstrParams
    """
    p = params
    x = _state_vector(state)
    u = np.asarray(u, dtype=float).reshape(4)
    (r1, _, _), (r2, _, _) = _rates(x, p)
    heat = -p.dH / (p.rhoL * p.Cp)
    d1 = p.F10 / p.VL1
    d2 = (p.F10 + p.F20) / p.VL2
    return np.array([
        d1 * (u[0] - x[0]) - r1,
        d1 * (p.T10 - x[1]) + heat * r1 + u[1] / (p.rhoL * p.Cp * p.VL1),
        p.F20 / p.VL2 * u[2] + p.F10 / p.VL2 * x[0] - d2 * x[2] - r2,
        p.F20 / p.VL2 * p.T20 + p.F10 / p.VL2 * x[1] - d2 * x[3] + heat * r2
        + u[3] / (p.rhoL * p.Cp * p.VL2),
    ])


def state_jacobian(state, params):
    p = params
    x = _state_vector(state)
    (_, c1, t1), (_, c2, t2) = _rates(x, p)
    heat = -p.dH / (p.rhoL * p.Cp)
    d1 = p.F10 / p.VL1
    d2 = (p.F10 + p.F20) / p.VL2
    f12 = p.F10 / p.VL2
    return np.array([
        [-d1 - c1, -t1, 0.0, 0.0],
        [heat * c1, -d1 + heat * t1, 0.0, 0.0],
        [f12, 0.0, -d2 - c2, -t2],
        [0.0, f12, heat * c2, -d2 + heat * t2],
    ])


def input_jacobian(params):
    p = params
    return np.diag([
        p.F10 / p.VL1,
        1.0 / (p.rhoL * p.Cp * p.VL1),
        p.F20 / p.VL2,
        1.0 / (p.rhoL * p.Cp * p.VL2),
    ])


def refine_steady_state(params, tol=1e-10, max_iter=100):
    """Newton iteration for the equilibrium at the steady inputs.

    Starts from the tabulated steady state.  Returns ``(state, inputs)``.
    """
    u = params.steady_inputs()
    x = params.nominal_state().as_array()
    for _ in range(max_iter + 1):
        try:
            f = cstr_derivative(x, u, params)
        except NonPhysicalState as exc:
            raise NewtonDiverged(f"Newton left the physical region: {exc}") from None
        if np.abs(f).max() < tol:
            return CstrState.from_array(x), u
        x = x - np.linalg.solve(state_jacobian(x, params), f)
        if not np.all(np.isfinite(x)):
            break
    raise NewtonDiverged(f"no equilibrium within {max_iter} Newton steps")


def linearize(params, state, u, tol=1e-8):
    """Continuous-time Jacobians ``(Ac, Bc)`` at an equilibrium."""
    res = np.abs(cstr_derivative(state, u, params)).max()
    if res >= tol:
        raise NotAnEquilibrium(f"derivative residual {res:.3g} at the linearization point")
    return state_jacobian(state, params), input_jacobian(params)


def expm(M, tol=1e-16):
    """Matrix exponential by scaling and squaring of the Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max() if M.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / 2.0**squarings
    out = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, 40):
        term = term @ X / k
        out = out + term
        if np.abs(term).max() <= tol * np.abs(out).max():
            break
    for _ in range(squarings):
        out = out @ out
    return out


def discretize(Ac, Bc, dt):
    """Zero-order-hold discretization through the augmented exponential."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.atleast_2d(np.asarray(Bc, dtype=float))
    n, p = Bc.shape
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = expm(aug * dt)
    return E[:n, :n], E[:n, n:]


def lqr_gain(A, B, Q, R):
    """State feedback ``K`` for ``u = K x`` from the control Riccati equation."""
    P = solve_dare(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def kalman_gain(A, C, Sigma_dd, Sigma_nn):
    """Steady-state predictor gain ``L`` for ``x_hat+ = A x_hat + B u + L (y - C x_hat)``."""
    try:
        S = solve_dare(A.T, C.T, Sigma_dd, Sigma_nn)
    except NotStabilizable as exc:
        raise NotDetectable(f"(A, C) is not detectable: {exc}") from None
    return A @ S @ C.T @ np.linalg.inv(C @ S @ C.T + Sigma_nn)


def synthesize_gains(plant, Q_lqr, R_lqr):
    """LQR and Kalman gains ``(K, L)`` for ``plant``; the closed loop is Schur stable."""
    Q_lqr = np.atleast_2d(np.asarray(Q_lqr, dtype=float))
    R_lqr = np.atleast_2d(np.asarray(R_lqr, dtype=float))
    K = lqr_gain(plant.A, plant.B, Q_lqr, R_lqr)
    L = kalman_gain(plant.A, plant.C, plant.Sigma_dd, plant.Sigma_nn)
    rho = max(spectral_radius(plant.A + plant.B @ K), spectral_radius(plant.A - L @ plant.C))
    if rho >= 1.0:
        raise UnstableDynamics(f"synthesized loop has spectral radius {rho:.6g}")
    return K, L


def default_noise():
    return 1e-4 * np.diag([1.0, 25.0, 1.0, 25.0])


@dataclass(frozen=True)
class CstrConfig:
    """Everything needed to build the linear CSTR loop.

    ``dt`` is the sampling period in hours; weights and noise covariances
    refer to deviation variables in the units listed in the module docstring.
    """

    params: CstrParams = field(default_factory=CstrParams)
    dt: float = 0.01
    Q_lqr: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1e-4, 1.0, 1e-4]))
    R_lqr: np.ndarray = field(default_factory=lambda: np.diag([1e-4, 1e-10, 1e-4, 1e-10]))
    Sigma_dd: np.ndarray = field(default_factory=default_noise)
    Sigma_nn: np.ndarray = field(default_factory=default_noise)
    C: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameter(f"dt must be positive, got {self.dt}")
        for name in ("Q_lqr", "R_lqr", "Sigma_dd", "Sigma_nn", "C"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "dt", float(self.dt))


@dataclass(frozen=True)
class CstrSystem:
    config: CstrConfig
    state: CstrState
    inputs: np.ndarray
    Ac: np.ndarray
    Bc: np.ndarray
    plant: PlantModel
    closed_loop: object


def build_cstr_system(config=None):
    """Refine, linearize, discretize and close the loop."""
    cfg = CstrConfig() if config is None else config
    state, u = refine_steady_state(cfg.params)
    Ac, Bc = linearize(cfg.params, state, u)
    A, B = discretize(Ac, Bc, cfg.dt)
    plant = PlantModel(A, B, cfg.C, cfg.Sigma_dd, cfg.Sigma_nn)
    K, L = synthesize_gains(plant, cfg.Q_lqr, cfg.R_lqr)
    return CstrSystem(cfg, state, u, Ac, Bc, plant, build_closed_loop(plant, K, L))


def simulate_nonlinear(params, x0, u, dt, steps, substeps=10):
    """RK4 integration of the nonlinear model with inputs held over each period.

    ``u`` is either one input vector or a ``(steps, 4)`` array.  Returns the
    ``(steps + 1, 4)`` array of states at the sampling instants.
    """
    u = np.asarray(u, dtype=float)
    U = np.broadcast_to(u, (steps, 4)) if u.ndim == 1 else u
    h = dt / substeps
    out = np.empty((steps + 1, 4))
    x = out[0] = np.asarray(x0, dtype=float)
    for t in range(steps):
        for _ in range(substeps):
            k1 = cstr_derivative(x, U[t], params)
            k2 = cstr_derivative(x + 0.5 * h * k1, U[t], params)
            k3 = cstr_derivative(x + 0.5 * h * k2, U[t], params)
            k4 = cstr_derivative(x + h * k3, U[t], params)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[t + 1] = x
    return out
