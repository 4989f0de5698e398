"""Random instance generators shared by the tests."""

import numpy as np

from diattack.cstr import synthesize_gains
from diattack.plant import AttackContext, PlantModel, build_closed_loop


def random_stable(rng, d, radius=0.9):
    A = rng.normal(size=(d, d))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    return A * (radius * rng.uniform(0.2, 1.0) / rho)


def random_spd(rng, d, floor=0.1):
    G = rng.normal(size=(d, d))
    return G @ G.T + floor * np.eye(d)


def random_plant(rng, n, m, p):
    A = rng.normal(size=(n, n)) / np.sqrt(n)
    return PlantModel(A, rng.normal(size=(n, p)), rng.normal(size=(m, n)),
                      random_spd(rng, n) * 0.1, random_spd(rng, m) * 0.1)


def random_closed_loop(rng, n=3, m=2, p=2):
    plant = random_plant(rng, n, m, p)
    K, L = synthesize_gains(plant, np.eye(n), np.eye(p))
    return build_closed_loop(plant, K, L)


def full_feasible_lambdas(M1, M2, n_grid=200):
    """Grid lambdas meeting conditions (i) and (ii)."""
    lo = np.max(np.linalg.eigvals(np.linalg.solve(M1, M2)).real)
    P = np.linalg.solve(M1, M2)
    out = []
    for lam in np.geomspace(lo * 1.0001, lo * 1e3, n_grid):
        Q = -lam * M1 @ np.linalg.inv(M2)
        if np.all(np.linalg.eigvals(P.T + Q).real > 1e-8) and np.all(np.linalg.eigvalsh(M2 - lam * M1) < -1e-8):
            out.append(lam)
    return out


def random_feasible_contexts(rng, count, max_m=6):
    """Contexts with random (M1, M2) where the full attack exists."""
    out = []
    while len(out) < count:
        m = int(rng.integers(1, max_m + 1))
        M1 = random_spd(rng, m, 0.5)
        M2 = random_spd(rng, m, rng.uniform(0.01, 3.0)) * rng.uniform(0.1, 30.0)
        lams = full_feasible_lambdas(M1, M2)
        if lams:
            out.append(AttackContext(M1, M2, lams[int(rng.integers(len(lams)))]))
    return out


def random_windowed_context(rng, m):
    """Random (M1, M2) with lambda inside a random measurement's window."""
    M1 = random_spd(rng, m, 0.5)
    M2 = random_spd(rng, m, 0.5) * rng.uniform(1.0, 10.0)
    j = int(rng.integers(m))
    a, b = M1[j, j], M2[j, j]
    if b <= a:
        M2 = M2 * (2.0 * a / b)
        b = M2[j, j]
    lo, hi = b / a, (b / a) ** 2
    lam = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return AttackContext(M1, M2, lam)
