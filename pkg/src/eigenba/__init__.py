"""Transfer-based black-box attacks steered by the surrogate Jacobian's right singular vectors."""

from .attacks import AttackConfig, AttackOutcome, attack, run_attack
from .linalg import eigen_directions, truncated_svd
from .net import LayeredModel, load_model, save_model
from .oracle import AttackObjective, QueryOracle

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackObjective",
    "AttackOutcome",
    "LayeredModel",
    "QueryOracle",
    "attack",
    "eigen_directions",
    "load_model",
    "run_attack",
    "save_model",
    "truncated_svd",
]
