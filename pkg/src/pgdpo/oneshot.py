"""Controls computed directly from costate estimates.

Unconstrained nodes get the closed forms

  C = (e^{rho t} lambda)^(-1/gamma)
  pi_risky = -lambda / (X d_x lambda) Sigma^-1 (mu - r 1)

and constrained nodes get the barrier Newton solve, warm-started across
nodes.  Consumption stays closed-form in both cases.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .barrier import DEFAULT_EPSILON, solve_simplex_weights
from .costate import CostateSample, concavity_guard
from .linalg import solve_spd
from .market import MarketParams

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12


def worker_count(flag: int | None = None) -> int:
    """Explicit flag wins; PGDPO_WORKERS applies when no flag is given."""
    if flag is not None and flag >= 1:
        return int(flag)
    env = os.environ.get("PGDPO_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def oneshot_consumption(t, lam, gamma: float, rho: float) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    lam = np.maximum(np.atleast_1d(np.asarray(lam, dtype=np.float64)), LAMBDA_FLOOR)
    return (np.exp(rho * t) * lam) ** (-1.0 / gamma)


def oneshot_controls(
    costates: CostateSample,
    market: MarketParams,
    gamma: float,
    rho: float,
    constrained: bool = False,
    epsilon: float = DEFAULT_EPSILON,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(pi, C) at every node of the costate batch.

    Unconstrained pi is the n-vector of risky weights; constrained pi is
    the (n+1)-simplex vector with the cash weight first.
    """
    c = oneshot_consumption(costates.t, costates.lam, gamma, rho)
    lam = np.maximum(costates.lam, LAMBDA_FLOOR)
    slope, _ = concavity_guard(lam, costates.dlam_dx, costates.x, gamma)

    if not constrained:
        base = solve_spd(market.sigma_cov, market.excess)
        scale = -lam / (costates.x * slope)
        return scale[:, None] * base[None, :], c

    count = costates.t.size
    out = np.empty((count, market.n + 1))

    def solve_run(indices):
        warm = None
        for i in indices:
            sol = solve_simplex_weights(
                market,
                float(lam[i]),
                float(slope[i]),
                float(costates.x[i]),
                epsilon=epsilon,
                init=warm,
            )
            out[i] = sol.pi
            warm = sol.pi

    n_workers = worker_count(workers)
    if n_workers <= 1 or count < 4 * n_workers:
        solve_run(range(count))
    else:
        chunks = np.array_split(np.arange(count), n_workers)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(solve_run, chunks))
    return out, c
