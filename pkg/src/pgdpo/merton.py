"""Closed-form unconstrained benchmarks and an independent ODE oracle.

The consumption fraction uses the decay rate nu = kappa_decay / gamma in
the exponential: alpha(t) = nu / (1 - exp(-nu (T - t))).  This is the
form consistent with the value-function ODE g' = kappa g - gamma
g^((gamma-1)/gamma) (substituting g = b^gamma gives the linear b' =
nu b - 1) and with the gamma = 1 log-utility closed form; the oracle and
the formula agree to discretization error, which the test suite checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonExhausted, OracleDiverged
from .linalg import solve_spd
from .market import MarketParams


def optimal_weights(m: MarketParams, gamma: float | None = None):
    """Unconstrained optimal risky weights and the implied cash weight.

    Returns (pi_star, pi0_star) with pi_star = (1/gamma) Sigma^-1 (mu - r 1).
    """
    g = m.gamma if gamma is None else gamma
    x = solve_spd(m.sigma_cov, m.excess)
    # one refinement step; keeps the round trip tight for ill-conditioned
    # large-n correlations
    resid = m.excess - m.sigma_cov.entries @ x
    x = x + solve_spd(m.sigma_cov, resid)
    pi_star = x / g
    return pi_star, 1.0 - pi_star.sum()


def decay_rate_kappa(m: MarketParams, gamma: float, rho: float) -> float:
    """kappa = rho - (1 - gamma) (r + theta^2 / (2 gamma))."""
    theta_sq = float(m.excess @ solve_spd(m.sigma_cov, m.excess))
    return rho - (1.0 - gamma) * (m.r + theta_sq / (2.0 * gamma))


def consumption_fraction(t, T: float, kappa_decay: float, gamma: float):
    """Optimal zero-bequest consumption rate per unit wealth, C*/X.

    alpha(t) = nu / (1 - exp(-nu (T - t))) with nu = kappa_decay / gamma;
    as nu -> 0 this tends to 1 / (T - t).  Strictly increasing in t and
    divergent at the horizon.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t >= T):
        raise HorizonExhausted("consumption fraction requires 0 <= t < T")
    tau = T - t
    nu = kappa_decay / gamma
    if nu == 0.0:
        out = 1.0 / tau
    else:
        out = nu / (-np.expm1(-nu * tau))
    return out if out.ndim else float(out)


def value_ode_oracle(
    m: MarketParams,
    gamma: float,
    rho: float,
    kappa_bequest: float,
    T: float,
    grid_size: int = 2000,
):
    """Tabulate g(t) on a uniform grid by RK4, backward from g(T).

    g solves g' = kappa g - gamma g^((gamma-1)/gamma) with terminal value
    g(T) = kappa_bequest; consumption rule C = g(t)^(-1/gamma) X.
    Returns (t_grid, g_grid).
    """
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    if kappa_bequest <= 0.0:
        raise ValueError("kappa_bequest must be positive")
    kappa = decay_rate_kappa(m, gamma, rho)
    expo = (gamma - 1.0) / gamma

    def f(g):
        if g <= 0.0:
            raise OracleDiverged(f"g left the positive domain: {g!r}")
        return kappa * g - gamma * g**expo

    h = T / grid_size
    g_grid = np.empty(grid_size + 1)
    g_grid[-1] = kappa_bequest
    g = kappa_bequest
    for j in range(grid_size, 0, -1):
        # classic RK4, stepping backward in time
        k1 = f(g)
        k2 = f(g - 0.5 * h * k1)
        k3 = f(g - 0.5 * h * k2)
        k4 = f(g - h * k3)
        g = g - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if g <= 0.0:
            raise OracleDiverged(f"g left the positive domain at step {j}")
        g_grid[j - 1] = g
    t_grid = np.linspace(0.0, T, grid_size + 1)
    return t_grid, g_grid


@dataclass(frozen=True)
class ClosedFormSolution:
    """Benchmark bundle: optimal weights, decay rate, and tabulated g."""

    pi_star: np.ndarray
    pi0_star: float
    kappa_decay: float
    rho: float
    gamma: float
    T: float
    kappa_bequest: float
    t_grid: np.ndarray
    g_grid: np.ndarray

    def g_of_t(self, t):
        return np.interp(t, self.t_grid, self.g_grid)

    def consumption(self, t, x):
        """Oracle consumption rule C = g(t)^(-1/gamma) x."""
        return self.g_of_t(t) ** (-1.0 / self.gamma) * np.asarray(x)

    def costate(self, t, x):
        """lambda(t, x) = e^(-rho t) g(t) x^(-gamma)."""
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-self.rho * t) * self.g_of_t(t) * x ** (-self.gamma)

    def costate_slope(self, t, x):
        """d lambda / dx = -gamma e^(-rho t) g(t) x^(-gamma-1)."""
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        return (
            -self.gamma
            * np.exp(-self.rho * t)
            * self.g_of_t(t)
            * x ** (-self.gamma - 1.0)
        )


def closed_form(
    m: MarketParams,
    gamma: float,
    rho: float,
    kappa_bequest: float,
    T: float,
    grid_size: int = 2000,
) -> ClosedFormSolution:
    pi_star, pi0 = optimal_weights(m, gamma)
    kappa = decay_rate_kappa(m, gamma, rho)
    t_grid, g_grid = value_ode_oracle(m, gamma, rho, kappa_bequest, T, grid_size)
    return ClosedFormSolution(
        pi_star=pi_star,
        pi0_star=pi0,
        kappa_decay=kappa,
        rho=rho,
        gamma=gamma,
        T=T,
        kappa_bequest=kappa_bequest,
        t_grid=t_grid,
        g_grid=g_grid,
    )
