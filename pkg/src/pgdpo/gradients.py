"""Parameter gradients: one backward sweep vs. Pontryagin assembly.

`pathwise_gradients` reads the policy-parameter adjoints off the rollout
tape.  `pontryagin_assembly` rebuilds the same gradients from extracted
costates and per-node control Jacobians:

  grad_theta = E sum_k {lhat_k X_k mu_tilde + X_k Vtilde Zhat_k}' dpi/dtheta dt
  grad_phi   = E sum_k [e^{-rho t_k} U'(C_k) - lhat_k] dC/dphi dt

For the exponential-Euler step these sums reproduce the tape gradient
*exactly* (to rounding) when the discrete costate pair is used:

  lhat_k = lambda_{k+1} X_{k+1} / X_k          (left-endpoint costate)
  Zhat_k = lhat_k (dW_k / dt - V' pi_risky_k)  (realized-noise Z)

lhat converges to lambda_k and the weight sums to the textbook
continuous-time integrands as dt -> 0; with the limiting pair
(lambda_k, Z from d_x lambda) the identity instead holds only in
conditional expectation, with an O(dt) pathwise gap.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, backward_sweep
from .market import MarketParams
from .rollout import EXPONENT_BOUND, TapedRollout, path_costates


def _marginal_utility(c: np.ndarray, gamma: float) -> np.ndarray:
    return 1.0 / c if gamma == 1.0 else c ** (-gamma)


def pathwise_gradients(roll: TapedRollout) -> tuple[np.ndarray, np.ndarray]:
    """(grad_theta, grad_phi) of the batch objective via the tape."""
    adjoints = backward_sweep(roll.tape, roll.j_hat)
    return (
        roll.inv_bound.param_adjoints(adjoints),
        roll.cons_bound.param_adjoints(adjoints),
    )


def _node_vjp(net, t, x, weight) -> np.ndarray:
    """weight' d(net output)/d(params) at constant inputs (t, x)."""
    tape = Tape()
    bound = net.bind(tape)
    out = bound.forward(t, tape.input(x))
    # seed the output adjoint with `weight` through a dummy linear root
    if out.value.ndim == 1:
        root = tape.sum(tape.mul(out, weight))
    else:
        root = tape.sum(tape.rowsum(tape.mul(out, weight)))
    adjoints = backward_sweep(tape, root)
    return bound.param_adjoints(adjoints)


def pontryagin_assembly(
    roll: TapedRollout, market: MarketParams
) -> tuple[np.ndarray, np.ndarray]:
    """Rebuild (grad_theta, grad_phi) from costates and node Jacobians.

    Independent of the rollout tape's parameter accumulation: the only
    tape quantity reused is the state adjoint lambda; control Jacobians
    are re-differentiated on fresh per-node tapes.
    """
    cfg = roll.cfg
    m_size = roll.batch_size
    lam = path_costates(roll)[0]  # (M, m+1)
    xs = roll.path_values()
    dt = roll.dt
    mu_tilde = np.concatenate([[market.r], market.mu])
    v = market.chol

    inv_net = roll.inv_bound.net
    cons_net = roll.cons_bound.net
    grad_theta = np.zeros(inv_net.param_count)
    grad_phi = np.zeros(cons_net.param_count)

    for k in range(cfg.m):
        t_k = roll.times(k)
        x_k, x_k1 = xs[:, k], xs[:, k + 1]
        # steps whose exponent hit the clamp carry no control gradient
        log_ratio = np.log(x_k1 / x_k)
        live = (np.abs(log_ratio) < EXPONENT_BOUND - 1e-12).astype(np.float64)

        lam_hat = lam[:, k + 1] * x_k1 / x_k
        pi_k = roll.pi_vars[k]
        pi_k = pi_k.value if hasattr(pi_k, "value") else np.asarray(pi_k)
        risky = pi_k[:, 1:] if inv_net.head == "simplex" else pi_k
        z_hat = lam_hat[:, None] * (
            roll.increments[:, k, :] / dt[:, None] - risky @ v
        )

        vz = z_hat @ v.T  # (V Zhat) over the risky rows
        if inv_net.head == "simplex":
            w_pi = lam_hat[:, None] * x_k[:, None] * mu_tilde[None, :]
            w_pi[:, 1:] += x_k[:, None] * vz
        else:
            w_pi = (
                lam_hat[:, None] * x_k[:, None] * market.excess[None, :]
                + x_k[:, None] * vz
            )
        w_pi *= (dt * live)[:, None] / m_size
        grad_theta += _node_vjp(inv_net, t_k, x_k, w_pi)

        c_k = roll.c_vars[k]
        c_k = c_k.value if hasattr(c_k, "value") else np.asarray(c_k)
        disc = np.exp(-cfg.rho * t_k)
        w_c = (disc * _marginal_utility(c_k, cfg.gamma) - lam_hat * live) * dt / m_size
        grad_phi += _node_vjp(cons_net, t_k, x_k, w_c)

    return grad_theta, grad_phi


def relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), 1e-300)
    return float(np.linalg.norm(a - b)) / denom
