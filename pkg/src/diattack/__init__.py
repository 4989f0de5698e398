"""Information-theoretic data-injection attacks on observer-based control loops."""

__version__ = "0.1.0"

from .attack import (  # noqa: E402
    FeasibilityReport,
    GaussianAttack,
    exhaustive_sparse_attack,
    full_attack,
    greedy_sparse_attack,
    single_measurement_attack,
)
from .detector import DetectorConfig, detection_probability  # noqa: E402
from .divergence import attack_cost, detection_kl, disruption_kl, estimate_kl, gaussian_kl  # noqa: E402
from .plant import AttackContext, PlantModel, build_closed_loop, make_context  # noqa: E402

__all__ = [
    "AttackContext",
    "DetectorConfig",
    "FeasibilityReport",
    "GaussianAttack",
    "PlantModel",
    "attack_cost",
    "build_closed_loop",
    "detection_kl",
    "detection_probability",
    "disruption_kl",
    "estimate_kl",
    "exhaustive_sparse_attack",
    "full_attack",
    "gaussian_kl",
    "greedy_sparse_attack",
    "make_context",
    "single_measurement_attack",
]
