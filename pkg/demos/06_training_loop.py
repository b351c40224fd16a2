"""A short end-to-end training run (about a minute).

Trains a small unconstrained policy, then compares the baseline policy
scores with the OneShot scores derived from the same trajectory.
"""

import time

from pgdpo.market import generate_market
from pgdpo.rollout import RolloutConfig
from pgdpo.train import TrainConfig, train

market = generate_market(n=5, seed=42)
roll_cfg = RolloutConfig(m=5, batch=128)
cfg = TrainConfig(
    iterations=600, batch=128, lr=3e-4, warmup=200,
    eval_every=100, mse_every=100, eval_nodes=128,
    eval_paths_per_node=8, checkpoint_every=300, seed=3, hidden=(64, 64),
)

t0 = time.perf_counter()
res_os = train(market, roll_cfg, cfg, mode="oneshot", out_dir="/tmp/demo_run_oneshot")
res_base = train(market, roll_cfg, cfg, mode="pgdpo", out_dir="/tmp/demo_run_baseline")
print(f"two 600-iteration runs in {time.perf_counter() - t0:.1f}s\n")

print("iter   baseline inv MSE   OneShot inv MSE   baseline cons MSE   OneShot cons MSE")
base_by_iter = {r.iteration: r for r in res_base.records}
for rec in res_os.records:
    if rec.iteration % 200 == 0:
        b = base_by_iter[rec.iteration]
        print(f"{rec.iteration:5d}   {b.investment_rel_mse:12.3e}   "
              f"{rec.investment_rel_mse:12.3e}   {b.consumption_rel_mse:12.3e}   "
              f"{rec.consumption_rel_mse:12.3e}")
print("\nOneShot controls reach low error long before the networks do.")
