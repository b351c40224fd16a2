"""Policy-fixed Pontryagin adjoints extracted from differentiated rollouts.

lambda_k = dJ/dX_k comes from one backward sweep of a taped rollout; its
spatial slope comes from a common-random-numbers central finite
difference of two tail rollouts started at X_k +- h; Z_k follows from
the slope via Z_k = (d_x lambda_k) X_k V^T pi_risky.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .market import MarketParams
from .rollout import RolloutConfig, TapedRollout, path_costates, simulate_taped

log = logging.getLogger(__name__)

FD_REL_STEP = 1e-4
FD_ABS_FLOOR = 1e-6


@dataclass
class CostateSample:
    """Batched costates at nodes (t, x)."""

    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    dlam_dx: np.ndarray
    z: np.ndarray  # (M, n)


def lambda_path(roll: TapedRollout) -> np.ndarray:
    """(M, m+1) per-path adjoints lambda_k = dJ^(i)/dX_k^(i)."""
    lam, _ = path_costates(roll)
    return lam


def lambda_at_start(
    market: MarketParams, investment, consumption, t0, x0, increments, cfg
) -> np.ndarray:
    """lambda at the initial nodes of a fresh (tail) rollout."""
    roll = simulate_taped(market, investment, consumption, t0, x0, increments, cfg)
    return lambda_path(roll)[:, 0]


def fd_steps(x: np.ndarray) -> np.ndarray:
    return np.maximum(FD_REL_STEP * np.asarray(x), FD_ABS_FLOOR)


def dlambda_dx_at_start(
    market: MarketParams, investment, consumption, t0, x0, increments, cfg
) -> np.ndarray:
    """CRN central difference of lambda in the start wealth.

    Falls back to a one-sided difference on nodes where x - h would leave
    the positive domain.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    h = fd_steps(x0)
    one_sided = x0 - h <= 0.0
    lam_up = lambda_at_start(
        market, investment, consumption, t0, x0 + h, increments, cfg
    )
    lam_dn = lambda_at_start(
        market, investment, consumption, t0, np.where(one_sided, x0, x0 - h),
        increments, cfg,
    )
    slope = (lam_up - lam_dn) / np.where(one_sided, h, 2.0 * h)
    return slope


def node_costates(
    market: MarketParams, investment, consumption, t0, x0, increments, cfg
) -> CostateSample:
    """(lambda, d_x lambda, Z) at sampled initial nodes; one CRN triple."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=np.float64))
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    roll = simulate_taped(market, investment, consumption, t0, x0, increments, cfg)
    lam = lambda_path(roll)[:, 0]
    slope = dlambda_dx_at_start(
        market, investment, consumption, t0, x0, increments, cfg
    )
    pi0 = roll.pi_vars[0]
    pi0 = pi0.value if hasattr(pi0, "value") else np.asarray(pi0)
    z = z_process(slope, x0, market, pi0)
    return CostateSample(t=t0, x=x0, lam=lam, dlam_dx=slope, z=z)


def path_costate_samples(
    market: MarketParams, investment, consumption, roll: TapedRollout
) -> list[CostateSample]:
    """Costates at every visited node (t_k, X_k) of a simulated batch.

    lambda comes from one sweep of the main rollout; each step's slope
    reuses the remaining increments in a CRN tail pair.
    """
    cfg = roll.cfg
    lam_all = lambda_path(roll)
    xs = roll.path_values()
    out = []
    for k in range(cfg.m):
        t_k = roll.times(k)
        x_k = xs[:, k]
        tail_cfg = RolloutConfig(
            T_max=cfg.T_max,
            m=cfg.m - k,
            wealth_min=cfg.wealth_min,
            wealth_max=cfg.wealth_max,
            batch=cfg.batch,
            rho=cfg.rho,
            gamma=cfg.gamma,
            kappa_bequest=cfg.kappa_bequest,
            seed=cfg.seed,
        )
        tail_incs = roll.increments[:, k:, :]
        slope = dlambda_dx_at_start(
            market, investment, consumption, t_k, x_k, tail_incs, tail_cfg
        )
        pi_k = roll.pi_vars[k]
        pi_k = pi_k.value if hasattr(pi_k, "value") else np.asarray(pi_k)
        out.append(
            CostateSample(
                t=t_k,
                x=x_k,
                lam=lam_all[:, k],
                dlam_dx=slope,
                z=z_process(slope, x_k, market, pi_k),
            )
        )
    return out


def z_process(lambda_slope, x, market: MarketParams, pi) -> np.ndarray:
    """Z = (d_x lambda) X V^T pi over the risky block."""
    pi = np.atleast_2d(np.asarray(pi, dtype=np.float64))
    risky = pi[:, 1:] if pi.shape[1] == market.n + 1 else pi
    slope = np.atleast_1d(np.asarray(lambda_slope, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return slope[:, None] * x[:, None] * (risky @ market.chol)


WEAK_SLOPE_FRACTION = 0.1


def concavity_guard(lam, slope, x, gamma: float):
    """Clamp unusable slopes to the CRRA-implied -gamma lambda / x.

    A noisy costate with d_x lambda >= 0 breaks the barrier solve's
    concavity, and one with |d_x lambda| near zero (implied relative risk
    aversion far below gamma) makes the Hamiltonian maximizer blow up;
    both get the CRRA-implied slope.  Returns (clamped slope, count).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    slope = np.atleast_1d(np.asarray(slope, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    floor = WEAK_SLOPE_FRACTION * gamma * np.abs(lam) / x
    bad = slope >= -floor
    count = int(bad.sum())
    if count:
        log.warning("clamping %d non-concave or weak costate slopes", count)
        slope = np.where(bad, -np.abs(lam) * gamma / x, slope)
    return slope, count
