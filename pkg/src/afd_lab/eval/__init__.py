"""评估指标、解析校验与校验套件。"""

from .metrics import Metric, physics_residual, random_directions, residuals, sliced_wasserstein
from .oracles import (
    AnalyticDensity,
    GaussianDensity,
    GaussianMixtureDensity,
    OracleReport,
    tilted_marginal,
    tilted_velocity,
    verify_conditional_velocity,
    verify_ratio_recovery,
    verify_reverse_kl,
    verify_tilted_law,
)
from .suite import check_names, failures, run_suite
from .toys import DiscreteToy, VelocitySupport, load_discrete_toys, load_velocity_supports

__all__ = [
    "AnalyticDensity",
    "DiscreteToy",
    "GaussianDensity",
    "GaussianMixtureDensity",
    "Metric",
    "OracleReport",
    "VelocitySupport",
    "check_names",
    "failures",
    "load_discrete_toys",
    "load_velocity_supports",
    "physics_residual",
    "random_directions",
    "residuals",
    "run_suite",
    "sliced_wasserstein",
    "tilted_marginal",
    "tilted_velocity",
    "verify_conditional_velocity",
    "verify_ratio_recovery",
    "verify_reverse_kl",
    "verify_tilted_law",
]
