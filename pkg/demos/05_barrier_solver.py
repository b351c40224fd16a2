"""Constrained portfolio weights via the log-barrier Newton solve.

Builds a market where some assets deserve zero weight, solves the
barrier system along an epsilon continuation, and cross-checks the
limit against exhaustive KKT active-set enumeration.
"""

import numpy as np

from pgdpo.barrier import BarrierSystem, kkt_enumerate_oracle, solve_simplex_weights
from pgdpo.market import MarketParams, generate_market

base = generate_market(n=6, seed=23)
mu = base.mu.copy()
mu[[1, 4]] = base.r - 0.25  # two assets with strongly negative excess return
market = MarketParams(
    n=6, r=base.r, mu=mu, sigma_cov=base.sigma_cov, chol=base.chol,
    pi_base=base.pi_base, gamma=base.gamma, seed=base.seed,
)

lam, x = 1.0, 1.0
slope = -market.gamma * lam / x

print("epsilon continuation:")
for eps in (1e-2, 1e-4, 1e-6, 1e-8):
    sol = solve_simplex_weights(market, lam, slope, x, epsilon=eps)
    print(f"  eps={eps:.0e}: residual {sol.residual_norm:.2e}, "
          f"weights on bad assets: {sol.pi[2]:.2e}, {sol.pi[5]:.2e}")

cert = kkt_enumerate_oracle(BarrierSystem(market, lam, slope, x))
sol = solve_simplex_weights(market, lam, slope, x, epsilon=1e-12)
print(f"\nKKT oracle active set (0 = cash): {cert.active_set}")
print(f"barrier (eps=1e-12) vs KKT |gap|_max: {np.abs(sol.pi - cert.pi).max():.2e}")
print(f"multipliers on active assets: "
      f"{ {int(i): round(float(cert.zeta[i]), 5) for i in cert.active_set} }")
print(f"sum of weights: {sol.pi.sum():.12f}, min weight: {sol.pi.min():.2e}")
