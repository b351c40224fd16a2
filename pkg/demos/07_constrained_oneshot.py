"""Constrained pipeline: simplex policy, barrier OneShot, surrogates.

Trains a small constrained policy briefly, derives barrier-based
OneShot controls, fits surrogate networks to them, and scores both
policies' first-order-condition residuals by the rollout protocol.
"""

import numpy as np

from pgdpo.market import generate_market
from pgdpo.rollout import RolloutConfig
from pgdpo.train import (
    SurrogateConfig,
    TrainConfig,
    evaluate_foc_protocol,
    fit_surrogates,
    train,
)

market = generate_market(n=4, seed=9)
roll_cfg = RolloutConfig(m=5, batch=128)
cfg = TrainConfig(
    iterations=800, batch=128, lr=3e-4, warmup=400,
    eval_every=200, mse_every=100, eval_nodes=128,
    eval_paths_per_node=8, checkpoint_every=400, seed=5,
    constrained=True, hidden=(64, 64),
    surrogate=SurrogateConfig(samples=4000, epochs=15, batch=256, lr=3e-3),
)

res = train(market, roll_cfg, cfg, mode="oneshot", out_dir="/tmp/demo_constrained")
pi_example = res.inv.forward(np.array([0.3]), np.array([1.0]))[0]
print(f"policy weights at (t=0.3, X=1): sum={pi_example.sum():.12f}, "
      f"min={pi_example.min():.2e}")

pi_sur, c_sur, info = fit_surrogates(market, res.inv, res.cons, roll_cfg, cfg)
print(f"surrogate fit MSE: investment {info['pi_fit_mse']:.2e}, "
      f"consumption {info['c_fit_mse']:.2e}")

foc_base = evaluate_foc_protocol(
    market, res.inv, res.cons, roll_cfg, batch=128, seed=5, tag=90,
    epsilon=cfg.epsilon, constrained=True,
)
foc_os = evaluate_foc_protocol(
    market, pi_sur, c_sur, roll_cfg, batch=128, seed=5, tag=90,
    epsilon=cfg.epsilon, constrained=True,
)
print("\nFOC residual MSE (rollout protocol, lower is better):")
print(f"  baseline nets:      investment {foc_base.investment:.3e}, "
      f"consumption {foc_base.consumption:.3e}")
print(f"  OneShot surrogates: investment {foc_os.investment:.3e}, "
      f"consumption {foc_os.consumption:.3e}")
