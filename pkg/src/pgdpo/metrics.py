"""Scoring: relative MSE against the closed form and FOC residuals.

Definitions (also declared in the CSV headers):

  consumption relative MSE: mean over nodes of (C - C_ref)^2 / C_ref^2
  investment relative MSE: mean over nodes of |pi - pi*|^2 / |pi*|^2;
    the per-asset decomposition mse_j = mean_i (pi_ij - pi*_j)^2 /
    (|pi*|^2 / n) averages back to the scalar
  consumption FOC residual: r_C = e^{-rho t} U'(C) - lambda; raw MSE and
    the lambda-normalized variant mean((r_C / lambda)^2)
  investment FOC residual: v_i = dH/dpi_i + eps/pi_i, eta = mean_i(v),
    r = v - eta (least-squares eta elimination); raw MSE over nodes and
    coordinates plus the (lambda X)-normalized variant

Nodes closer than 0.01 to the horizon are excluded from relative MSE
(the reference consumption rule diverges there).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierSystem
from .market import MarketParams
from .merton import ClosedFormSolution

log = logging.getLogger(__name__)

HORIZON_EXCLUSION = 0.01
_WEIGHT_FLOOR = 1e-30


@dataclass
class RelativeMse:
    consumption: float
    investment: float
    per_asset_min: float
    per_asset_max: float
    nodes_used: int


@dataclass
class FocResiduals:
    consumption: float
    investment: float
    consumption_normalized: float
    investment_normalized: float


def relative_mse(
    t: np.ndarray,
    x: np.ndarray,
    consumption: np.ndarray,
    risky_weights: np.ndarray,
    reference: ClosedFormSolution,
) -> RelativeMse:
    """Score learned controls against the closed-form benchmark."""
    t = np.asarray(t, dtype=np.float64)
    keep = reference.T - t >= HORIZON_EXCLUSION
    dropped = int((~keep).sum())
    if dropped:
        log.info("relative_mse: excluded %d nodes near the horizon", dropped)
    if not np.any(keep):
        raise ValueError("no nodes left after horizon exclusion")
    t, x = t[keep], np.asarray(x, dtype=np.float64)[keep]
    c = np.asarray(consumption, dtype=np.float64)[keep]
    pi = np.atleast_2d(np.asarray(risky_weights, dtype=np.float64))[keep]

    c_ref = reference.consumption(t, x)
    cons_mse = float(np.mean((c - c_ref) ** 2 / c_ref**2))

    pi_ref = reference.pi_star
    ref_norm_sq = float(pi_ref @ pi_ref)
    diff_sq = (pi - pi_ref[None, :]) ** 2
    inv_mse = float(diff_sq.sum(axis=1).mean() / ref_norm_sq)
    per_asset = diff_sq.mean(axis=0) / (ref_norm_sq / pi_ref.size)
    return RelativeMse(
        consumption=cons_mse,
        investment=inv_mse,
        per_asset_min=float(per_asset.min()),
        per_asset_max=float(per_asset.max()),
        nodes_used=int(keep.sum()),
    )


def _marginal_utility(c: np.ndarray, gamma: float) -> np.ndarray:
    return 1.0 / c if gamma == 1.0 else c ** (-gamma)


def foc_residuals(
    t: np.ndarray,
    x: np.ndarray,
    pi_simplex: np.ndarray,
    consumption: np.ndarray,
    lam: np.ndarray,
    lam_slope: np.ndarray,
    market: MarketParams,
    gamma: float,
    rho: float,
    epsilon: float,
) -> FocResiduals:
    """Mean squared first-order-condition residuals over nodes.

    pi_simplex carries the cash weight in column 0.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    pi = np.atleast_2d(np.asarray(pi_simplex, dtype=np.float64))
    c = np.atleast_1d(np.asarray(consumption, dtype=np.float64))
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    slope = np.atleast_1d(np.asarray(lam_slope, dtype=np.float64))

    r_c = np.exp(-rho * t) * _marginal_utility(c, gamma) - lam
    cons_raw = float(np.mean(r_c**2))
    cons_norm = float(np.mean((r_c / lam) ** 2))

    floored = int((pi < _WEIGHT_FLOOR).sum())
    if floored:
        log.warning("foc_residuals: floored %d near-zero weights", floored)
    pi = np.maximum(pi, _WEIGHT_FLOOR)

    inv_sq_sum = 0.0
    inv_norm_sq_sum = 0.0
    for i in range(t.size):
        sys = BarrierSystem(
            market, lam=float(lam[i]), lam_slope=float(slope[i]),
            x=float(x[i]), epsilon=epsilon,
        )
        v = sys.hamiltonian_gradient(pi[i]) + epsilon / pi[i]
        r = v - v.mean()
        inv_sq_sum += float(np.mean(r**2))
        inv_norm_sq_sum += float(np.mean((r / (lam[i] * x[i])) ** 2))
    return FocResiduals(
        consumption=cons_raw,
        investment=inv_sq_sum / t.size,
        consumption_normalized=cons_norm,
        investment_normalized=inv_norm_sq_sum / t.size,
    )


def unconstrained_foc_residuals(
    t: np.ndarray,
    x: np.ndarray,
    pi_risky: np.ndarray,
    consumption: np.ndarray,
    lam: np.ndarray,
    lam_slope: np.ndarray,
    market: MarketParams,
    gamma: float,
    rho: float,
) -> FocResiduals:
    """Residuals of the unconstrained stationarity conditions.

    Investment: r = lam X (mu - r 1) + (d_x lam) X^2 Sigma pi_risky,
    the vector whose root is the closed-form optimal portfolio.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    pi = np.atleast_2d(np.asarray(pi_risky, dtype=np.float64))
    c = np.atleast_1d(np.asarray(consumption, dtype=np.float64))
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    slope = np.atleast_1d(np.asarray(lam_slope, dtype=np.float64))

    r_c = np.exp(-rho * t) * _marginal_utility(c, gamma) - lam
    r_pi = (lam * x)[:, None] * market.excess[None, :] + (slope * x**2)[
        :, None
    ] * (pi @ market.sigma_cov.entries)
    scale = (lam * x)[:, None]
    return FocResiduals(
        consumption=float(np.mean(r_c**2)),
        investment=float(np.mean(r_pi**2)),
        consumption_normalized=float(np.mean((r_c / lam) ** 2)),
        investment_normalized=float(np.mean((r_pi / scale) ** 2)),
    )
