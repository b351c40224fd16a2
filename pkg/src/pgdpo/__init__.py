"""Pontryagin-guided direct policy optimization for consumption-investment.

Neural consumption and investment policies trained by backpropagation
through simulated wealth paths, with OneShot controls computed directly
from the extracted Pontryagin costates.
"""

from .barrier import (
    BarrierSolution,
    BarrierSystem,
    KktCertificate,
    kkt_enumerate_oracle,
    newton_solve,
    solve_simplex_weights,
)
from .costate import CostateSample, lambda_path, node_costates, z_process
from .market import MarketParams, generate_market, load_market, save_market
from .merton import (
    ClosedFormSolution,
    closed_form,
    consumption_fraction,
    decay_rate_kappa,
    optimal_weights,
    value_ode_oracle,
)
from .metrics import foc_residuals, relative_mse
from .oneshot import oneshot_controls
from .policy import PolicyNet, load_checkpoint, save_checkpoint
from .rollout import (
    RolloutConfig,
    brownian_increments,
    sample_initial_nodes,
    simulate_numpy,
    simulate_taped,
)
from .train import SurrogateConfig, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BarrierSolution",
    "BarrierSystem",
    "ClosedFormSolution",
    "CostateSample",
    "KktCertificate",
    "MarketParams",
    "PolicyNet",
    "RolloutConfig",
    "SurrogateConfig",
    "TrainConfig",
    "brownian_increments",
    "closed_form",
    "consumption_fraction",
    "decay_rate_kappa",
    "foc_residuals",
    "generate_market",
    "kkt_enumerate_oracle",
    "lambda_path",
    "load_checkpoint",
    "load_market",
    "newton_solve",
    "node_costates",
    "oneshot_controls",
    "optimal_weights",
    "relative_mse",
    "sample_initial_nodes",
    "save_checkpoint",
    "save_market",
    "simulate_numpy",
    "simulate_taped",
    "solve_simplex_weights",
    "train",
    "value_ode_oracle",
    "z_process",
]
