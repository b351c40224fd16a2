"""Exponential-Euler wealth simulation, objective estimation, sampling.

Paths start from randomly drawn initial nodes (t0, x0); each path uses a
local step dt = (T - t0) / m and runs to the common horizon T.  Controls
are frozen at the left endpoint of every step and wealth is updated
multiplicatively, which keeps it positive for any controls:

  X_{k+1} = X_k exp([pi' mu_tilde - 0.5 pi_r' Sigma pi_r - C/X] dt
                    + pi_r' V dW)

Both a taped variant (for gradients and costates) and a plain numpy
variant (for fast evaluation) are provided, and both accept analytic
policy stand-ins as well as neural policies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var, backward_sweep
from .errors import UtilityOverflow
from .market import MarketParams

log = logging.getLogger(__name__)

EVAL_CONSUMPTION_FLOOR = 1e-10

# Per-step log-return clamp.  Legitimate dynamics stay far inside +-20;
# only a consumption-to-wealth blowup under an untrained policy can reach
# it, and without the clamp those paths underflow wealth to exact zero
# and poison the objective with infinities.
EXPONENT_BOUND = 20.0


@dataclass
class RolloutConfig:
    T_max: float = 1.0
    m: int = 5
    wealth_min: float = 0.1
    wealth_max: float = 2.0
    batch: int = 1000
    rho: float = 0.1
    gamma: float = 2.0
    kappa_bequest: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("steps per path must be >= 1")
        if not (0.0 < self.wealth_min < self.wealth_max):
            raise ValueError("wealth domain must be within (0, inf)")


def sample_initial_nodes(cfg: RolloutConfig, count: int, rng) -> tuple:
    """Uniform (t0, x0) pairs on [0, T] x [wealth_min, wealth_max]."""
    if count < 1:
        raise ValueError("need at least one node")
    t0 = rng.uniform(0.0, cfg.T_max, count)
    x0 = rng.uniform(cfg.wealth_min, cfg.wealth_max, count)
    return t0, x0


def brownian_increments(dt: np.ndarray, m: int, n: int, rng) -> np.ndarray:
    """(M, m, n) increments with per-path variance dt_i per step."""
    z = rng.standard_normal((dt.size, m, n))
    return z * np.sqrt(dt)[:, None, None]


# -- analytic policy stand-ins -------------------------------------------------
# Anything with .head, .forward(t, x) and .bind(tape) can drive a rollout;
# these cover closed-form benchmarks and edge-case tests.


def _batch_size(x) -> int:
    arr = x.value if isinstance(x, Var) else np.atleast_1d(np.asarray(x))
    return int(np.shape(arr)[0])


class FixedWeightPolicy:
    """Constant portfolio weights; head 'linear' (risky only) or 'simplex'."""

    def __init__(self, weights, head: str = "linear"):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.head = head

    def forward(self, t, x):
        return np.broadcast_to(
            self.weights, (_batch_size(x), self.weights.size)
        )

    def bind(self, tape):
        return self


class ProportionalConsumption:
    """C = rate(t) * X for a callable or constant rate; head 'positive'."""

    head = "positive"

    def __init__(self, rate):
        self.rate = rate if callable(rate) else (lambda t, r=rate: np.full_like(np.asarray(t, dtype=np.float64), r))

    def forward(self, t, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape)
        return self.rate(t) * x

    def bind(self, tape):
        return _TapedProportional(self.rate, tape)


class _TapedProportional:
    def __init__(self, rate, tape):
        self.rate = rate
        self.tape = tape

    def forward(self, t, x: Var):
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), np.shape(x.value))
        return self.tape.mul(x, self.rate(t))


class ZeroConsumption:
    """C = 0; only valid with gamma < 1 utilities."""

    head = "positive"

    def forward(self, t, x):
        return np.zeros(_batch_size(x))

    def bind(self, tape):
        return self


# -- shared assembly helpers ---------------------------------------------------


def _vmul(tape, a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return tape.mul(a, b)
    return a * b


def _vadd(tape, a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return tape.add(a, b)
    return a + b


def _vsub(tape, a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return tape.sub(a, b)
    return a - b


def _value(x):
    return x.value if isinstance(x, Var) else x


def _utility(tape, c, gamma: float, taped: bool):
    """CRRA utility; logarithm branch at gamma = 1."""
    if isinstance(c, Var):
        if gamma == 1.0:
            return tape.log(c)
        return tape.mul(tape.power(c, 1.0 - gamma), 1.0 / (1.0 - gamma))
    if gamma == 1.0:
        return np.log(c)
    return c ** (1.0 - gamma) / (1.0 - gamma)


def _check_consumption(c_val, gamma: float, clamp: bool):
    if gamma < 1.0:
        return c_val
    bad = c_val <= 0.0
    if np.any(bad):
        if not clamp:
            raise UtilityOverflow(
                f"{int(bad.sum())} non-positive consumption values with gamma={gamma}"
            )
        log.warning(
            "clamping %d non-positive consumption values to %g",
            int(bad.sum()),
            EVAL_CONSUMPTION_FLOOR,
        )
        return np.maximum(c_val, EVAL_CONSUMPTION_FLOOR)
    return c_val


# -- taped rollout -------------------------------------------------------------


@dataclass
class TapedRollout:
    """Batched simulation on a tape, ready for backward sweeps."""

    tape: Tape
    t0: np.ndarray
    dt: np.ndarray
    x0_var: Var
    x_vars: list  # m+1 Vars, (M,) each
    pi_vars: list  # m entries, Var or ndarray
    c_vars: list  # m entries, Var or ndarray
    increments: np.ndarray
    j_path: Var
    j_hat: Var
    inv_bound: object
    cons_bound: object
    cfg: RolloutConfig

    @property
    def batch_size(self) -> int:
        return self.t0.size

    def times(self, k: int) -> np.ndarray:
        return self.t0 + k * self.dt

    def path_values(self) -> np.ndarray:
        return np.stack([_value(x) for x in self.x_vars], axis=1)


def simulate_taped(
    market: MarketParams,
    investment,
    consumption,
    t0,
    x0,
    increments,
    cfg: RolloutConfig,
) -> TapedRollout:
    """Simulate and record the full computation on a fresh tape."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=np.float64))
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    dt = (cfg.T_max - t0) / cfg.m
    tape = Tape()
    inv = investment.bind(tape)
    cons = consumption.bind(tape)
    x = tape.input(x0)

    mu_tilde = np.concatenate([[market.r], market.mu])
    sigma = market.sigma_cov.entries
    v = market.chol

    x_vars = [x]
    pi_list, c_list = [], []
    running = None
    for k in range(cfg.m):
        t_k = t0 + k * dt
        pi = inv.forward(t_k, x)
        c = cons.forward(t_k, x)
        c_checked = _check_consumption(_value(c), cfg.gamma, clamp=False)
        if not isinstance(c, Var):
            c = c_checked
        pi_list.append(pi)
        c_list.append(c)

        if getattr(inv, "head", "linear") == "simplex":
            pi_r = tape.slice_cols(pi, 1, market.n + 1) if isinstance(pi, Var) else _value(pi)[:, 1:]
            drift_dot = tape.matvec(pi, mu_tilde) if isinstance(pi, Var) else _value(pi) @ mu_tilde
        else:
            pi_r = pi
            excess_dot = tape.matvec(pi_r, market.excess) if isinstance(pi_r, Var) else _value(pi_r) @ market.excess
            drift_dot = _vadd(tape, market.r, excess_dot)

        if isinstance(pi_r, Var):
            half_quad = tape.mul(tape.row_dot(tape.matmul(pi_r, sigma), pi_r), 0.5)
            diff = tape.row_dot(tape.matmul(pi_r, v), increments[:, k, :])
        else:
            pr = _value(pi_r)
            half_quad = 0.5 * np.einsum("ij,ij->i", pr @ sigma, pr)
            diff = np.einsum("ij,ij->i", pr @ v, increments[:, k, :])

        c_over_x = tape.div(c, x) if isinstance(c, Var) else _value(c) / _value(x)
        exponent = _vadd(
            tape,
            _vmul(tape, _vsub(tape, _vsub(tape, drift_dot, half_quad), c_over_x), dt),
            diff,
        )
        if isinstance(exponent, Var):
            exponent = tape.clip(exponent, -EXPONENT_BOUND, EXPONENT_BOUND)
            factor = tape.exp(exponent)
        else:
            factor = np.exp(np.clip(exponent, -EXPONENT_BOUND, EXPONENT_BOUND))
        x = _vmul(tape, x, factor)
        x_vars.append(x)

        disc = np.exp(-cfg.rho * t_k)
        u_k = _vmul(tape, _vmul(tape, _utility(tape, c, cfg.gamma, True), disc), dt)
        running = u_k if running is None else _vadd(tape, running, u_k)

    bequest = _vmul(
        tape,
        _utility(tape, x, cfg.gamma, True),
        cfg.kappa_bequest * np.exp(-cfg.rho * cfg.T_max),
    )
    j_path = _vadd(tape, running, bequest)
    if not isinstance(j_path, Var):
        raise RuntimeError("objective recorded no tape dependence")
    j_hat = tape.mean(j_path)
    return TapedRollout(
        tape=tape,
        t0=t0,
        dt=dt,
        x0_var=x_vars[0],
        x_vars=x_vars,
        pi_vars=pi_list,
        c_vars=c_list,
        increments=increments,
        j_path=j_path,
        j_hat=j_hat,
        inv_bound=inv,
        cons_bound=cons,
        cfg=cfg,
    )


# -- plain numpy rollout ---------------------------------------------------------


@dataclass
class PathBatch:
    """Plain-array simulation result."""

    t0: np.ndarray
    dt: np.ndarray
    x_path: np.ndarray  # (M, m+1)
    pi_path: np.ndarray  # (M, m, width)
    c_path: np.ndarray  # (M, m)
    increments: np.ndarray
    step_utilities: np.ndarray  # (M, m) discounted, dt-weighted
    terminal_utility: np.ndarray  # (M,)
    j_path: np.ndarray
    j_hat: float
    cfg: RolloutConfig = field(repr=False, default=None)


def simulate_numpy(
    market: MarketParams,
    investment,
    consumption,
    t0,
    x0,
    increments,
    cfg: RolloutConfig,
) -> PathBatch:
    """Fast evaluation rollout; clamps non-positive consumption softly."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=np.float64))
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    dt = (cfg.T_max - t0) / cfg.m
    x = x0.copy()

    mu_tilde = np.concatenate([[market.r], market.mu])
    sigma = market.sigma_cov.entries
    v = market.chol
    simplex = getattr(investment, "head", "linear") == "simplex"

    x_path = np.empty((t0.size, cfg.m + 1))
    x_path[:, 0] = x
    width = market.n + 1 if simplex else market.n
    pi_path = np.empty((t0.size, cfg.m, width))
    c_path = np.empty((t0.size, cfg.m))
    step_u = np.empty((t0.size, cfg.m))

    for k in range(cfg.m):
        t_k = t0 + k * dt
        pi = np.asarray(investment.forward(t_k, x), dtype=np.float64)
        c = _check_consumption(
            np.asarray(consumption.forward(t_k, x), dtype=np.float64),
            cfg.gamma,
            clamp=True,
        )
        pi_path[:, k, :] = pi
        c_path[:, k] = c

        if simplex:
            pi_r = pi[:, 1:]
            drift_dot = pi @ mu_tilde
        else:
            pi_r = pi
            drift_dot = market.r + pi_r @ market.excess
        half_quad = 0.5 * np.einsum("ij,ij->i", pi_r @ sigma, pi_r)
        diff = np.einsum("ij,ij->i", pi_r @ v, increments[:, k, :])
        expo = np.clip(
            (drift_dot - half_quad - c / x) * dt + diff,
            -EXPONENT_BOUND,
            EXPONENT_BOUND,
        )
        x = x * np.exp(expo)
        x_path[:, k + 1] = x
        step_u[:, k] = np.exp(-cfg.rho * t_k) * _utility(None, c, cfg.gamma, False) * dt

    terminal = (
        cfg.kappa_bequest
        * np.exp(-cfg.rho * cfg.T_max)
        * _utility(None, x, cfg.gamma, False)
    )
    j_path = step_u.sum(axis=1) + terminal
    return PathBatch(
        t0=t0,
        dt=dt,
        x_path=x_path,
        pi_path=pi_path,
        c_path=c_path,
        increments=increments,
        step_utilities=step_u,
        terminal_utility=terminal,
        j_path=j_path,
        j_hat=float(j_path.mean()),
        cfg=cfg,
    )


def objective_estimate(rollout_result):
    """(j_hat, per-path J) from either rollout flavor."""
    if isinstance(rollout_result, TapedRollout):
        return float(rollout_result.j_hat.value), _value(rollout_result.j_path)
    return rollout_result.j_hat, rollout_result.j_path


def path_costates(roll: TapedRollout) -> tuple[np.ndarray, list]:
    """Backward sweep from the batch objective.

    Returns (lambda_nodes, adjoints) where lambda_nodes is (M, m+1) with
    lambda_nodes[i, k] = dJ^(i)/dX_k^(i); the 1/M factor from the batch
    mean is undone because paths are independent.
    """
    adjoints = backward_sweep(roll.tape, roll.j_hat)
    m_size = roll.batch_size
    lam = np.empty((m_size, len(roll.x_vars)))
    for k, xv in enumerate(roll.x_vars):
        g = adjoints[xv.index]
        lam[:, k] = 0.0 if g is None else np.asarray(g) * m_size
    return lam, adjoints