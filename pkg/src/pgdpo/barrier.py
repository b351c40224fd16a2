"""Pointwise Hamiltonian maximization over the simplex.

Production path: log-barrier Newton with backtracking on the system

  F_i   = dH/dpi_i + eps/pi_i - eta,   i = 0..n
  F_sum = sum(pi) - 1

where dH/dpi_0 = lam X r and dH/dpi_i = lam X mu_i + s X^2 [Sigma pi]_i
with s = d_x lambda < 0.  This is the stationarity of maximizing the
reduced Hamiltonian plus eps * sum(log pi) subject to the sum constraint;
its Jacobian carries -eps/pi^2 on the diagonal.  Small instances can be
cross-checked by full active-set enumeration (`kkt_enumerate_oracle`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .costate import concavity_guard
from .errors import NoFeasibleCertificate, SingularJacobian
from .market import MarketParams

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 80
CONTINUATION_LADDER = (1e-2, 1e-4)
_POSITIVITY_MARGIN = 0.995


@dataclass
class BarrierSystem:
    """One pointwise problem (t_k, X_k, lambda_k, d_x lambda_k)."""

    market: MarketParams
    lam: float
    lam_slope: float
    x: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("barrier parameter must be positive")
        if self.x <= 0.0:
            raise ValueError("wealth must be positive")
        slope, clamped = concavity_guard(
            self.lam, self.lam_slope, self.x, self.market.gamma
        )
        if clamped:
            self.lam_slope = float(slope[0])

    @property
    def n(self) -> int:
        return self.market.n

    def hamiltonian_gradient(self, pi: np.ndarray) -> np.ndarray:
        """(n+1)-vector of dH/dpi_i at fixed costates."""
        m = self.market
        grad = np.empty(self.n + 1)
        grad[0] = self.lam * self.x * m.r
        grad[1:] = self.lam * self.x * m.mu + self.lam_slope * self.x**2 * (
            m.sigma_cov.entries @ pi[1:]
        )
        return grad

    def reduced_hamiltonian(self, pi: np.ndarray) -> float:
        """Objective whose stationarity matches the gradient above."""
        m = self.market
        risky = pi[1:]
        lin = self.lam * self.x * (pi[0] * m.r + risky @ m.mu)
        quad = 0.5 * self.lam_slope * self.x**2 * risky @ (
            m.sigma_cov.entries @ risky
        )
        return float(lin + quad)


@dataclass
class BarrierSolution:
    pi: np.ndarray
    eta: float
    residual_norm: float
    iterations: int
    epsilon_used: float
    converged: bool = True


@dataclass
class KktCertificate:
    pi: np.ndarray
    eta: float
    zeta: np.ndarray
    active_set: tuple
    value: float


def barrier_residual(sys: BarrierSystem, pi: np.ndarray, eta: float) -> np.ndarray:
    if np.any(pi <= 0.0):
        raise ValueError("barrier residual requires pi > 0")
    f = np.empty(sys.n + 2)
    f[:-1] = sys.hamiltonian_gradient(pi) + sys.epsilon / pi - eta
    f[-1] = pi.sum() - 1.0
    return f


def barrier_jacobian(sys: BarrierSystem, pi: np.ndarray, eta: float) -> np.ndarray:
    if np.any(pi <= 0.0):
        raise ValueError("barrier jacobian requires pi > 0")
    n = sys.n
    df = np.zeros((n + 2, n + 2))
    df[1 : n + 1, 1 : n + 1] = (
        sys.lam_slope * sys.x**2 * sys.market.sigma_cov.entries
    )
    idx = np.arange(n + 1)
    df[idx, idx] -= sys.epsilon / pi**2
    df[: n + 1, n + 1] = -1.0
    df[n + 1, : n + 1] = 1.0
    return df


def newton_solve(
    sys: BarrierSystem,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BarrierSolution:
    """Damped Newton on (pi, eta); every iterate keeps pi > 0.

    On a singular Jacobian raises SingularJacobian; on exhausting the
    budget returns the best iterate flagged converged=False.
    """
    n = sys.n
    if init is None:
        pi = np.full(n + 1, 1.0 / (n + 1))
    else:
        pi = np.asarray(init, dtype=np.float64).copy()
        if np.any(pi <= 0.0) or abs(pi.sum() - 1.0) > 1e-6:
            pi = np.full(n + 1, 1.0 / (n + 1))
    eta = float(np.mean(sys.hamiltonian_gradient(pi) + sys.epsilon / pi))

    f = barrier_residual(sys, pi, eta)
    norm = np.abs(f).max()
    best = (pi.copy(), eta, norm)
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return BarrierSolution(pi, eta, norm, it - 1, sys.epsilon)
        jac = barrier_jacobian(sys, pi, eta)
        try:
            delta = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(
                f"singular Newton system at iteration {it} (eps={sys.epsilon:g})"
            ) from exc
        dpi, deta = delta[:-1], delta[-1]

        alpha = 1.0
        shrinking = dpi < 0.0
        if np.any(shrinking):
            alpha = min(
                1.0,
                _POSITIVITY_MARGIN * np.min(pi[shrinking] / -dpi[shrinking]),
            )
        while alpha > 1e-14:
            cand_pi = pi + alpha * dpi
            cand_eta = eta + alpha * deta
            cand_f = barrier_residual(sys, cand_pi, cand_eta)
            cand_norm = np.abs(cand_f).max()
            if cand_norm <= (1.0 - 1e-4 * alpha) * norm or cand_norm <= tol:
                break
            alpha *= 0.5
        pi, eta, f, norm = cand_pi, cand_eta, cand_f, cand_norm
        if norm < best[2]:
            best = (pi.copy(), eta, norm)

    pi, eta, norm = best
    log.warning("Newton budget exhausted: residual %.3e (eps=%g)", norm, sys.epsilon)
    return BarrierSolution(pi, eta, norm, max_iter, sys.epsilon, converged=False)


def solve_simplex_weights(
    market: MarketParams,
    lam: float,
    lam_slope: float,
    x: float,
    epsilon: float = DEFAULT_EPSILON,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BarrierSolution:
    """Continuation driver: solve the ladder down to the requested eps.

    A singular stage is retried once at 10x its eps before giving up.
    """
    rungs = [e for e in CONTINUATION_LADDER if e > epsilon]
    while rungs and rungs[-1] > 100.0 * epsilon:
        rungs.append(rungs[-1] / 100.0)
    pi = init
    sol = None
    for eps in (*rungs, epsilon):
        sys = BarrierSystem(market, lam, lam_slope, x, epsilon=eps)
        try:
            sol = newton_solve(sys, init=pi, tol=tol, max_iter=max_iter)
        except SingularJacobian:
            retry = BarrierSystem(market, lam, lam_slope, x, epsilon=10 * eps)
            sol = newton_solve(retry, init=pi, tol=tol, max_iter=max_iter)
            sys = BarrierSystem(market, lam, lam_slope, x, epsilon=eps)
            sol = newton_solve(sys, init=sol.pi, tol=tol, max_iter=max_iter)
        pi = sol.pi
    return sol


def kkt_enumerate_oracle(sys: BarrierSystem) -> KktCertificate:
    """Active-set enumeration over all 2^(n+1) - 1 candidate sets.

    Ignores the barrier parameter; returns the feasible certificate with
    the largest reduced Hamiltonian.  Only intended for n <= 12.
    """
    n = sys.n
    if n > 12:
        raise ValueError("enumeration oracle limited to n <= 12")
    m = sys.market
    a0 = sys.lam * sys.x * m.r
    b = sys.lam * sys.x * m.mu
    quad = sys.lam_slope * sys.x**2 * m.sigma_cov.entries

    best: KktCertificate | None = None
    indices = list(range(n + 1))
    for size in range(0, n + 1):
        for active in combinations(indices, size):
            active_mask = np.zeros(n + 1, dtype=bool)
            active_mask[list(active)] = True
            free = ~active_mask
            free_risky = [i - 1 for i in indices if free[i] and i > 0]

            pi = np.zeros(n + 1)
            if free[0]:
                eta = a0
                if free_risky:
                    try:
                        pi_r = np.linalg.solve(
                            quad[np.ix_(free_risky, free_risky)],
                            eta - b[free_risky],
                        )
                    except np.linalg.LinAlgError:
                        continue
                    pi[[i + 1 for i in free_risky]] = pi_r
                pi[0] = 1.0 - pi[1:].sum()
            else:
                if not free_risky:
                    continue
                k = len(free_risky)
                lhs = np.zeros((k + 1, k + 1))
                lhs[:k, :k] = quad[np.ix_(free_risky, free_risky)]
                lhs[:k, k] = -1.0
                lhs[k, :k] = 1.0
                rhs = np.concatenate([-b[free_risky], [1.0]])
                try:
                    sol = np.linalg.solve(lhs, rhs)
                except np.linalg.LinAlgError:
                    continue
                pi[[i + 1 for i in free_risky]] = sol[:k]
                eta = float(sol[k])

            if np.any(pi < -1e-12):
                continue
            pi = np.maximum(pi, 0.0)
            if abs(pi.sum() - 1.0) > 1e-9:
                continue
            grad = sys.hamiltonian_gradient(pi)
            zeta = np.zeros(n + 1)
            zeta[active_mask] = eta - grad[active_mask]
            if np.any(zeta < -1e-9):
                continue
            stat = grad - eta + zeta
            if free.any() and np.abs(stat[free]).max() > 1e-9:
                continue
            value = sys.reduced_hamiltonian(pi)
            cert = KktCertificate(
                pi=pi,
                eta=float(eta),
                zeta=np.maximum(zeta, 0.0),
                active_set=tuple(np.flatnonzero(active_mask)),
                value=value,
            )
            if best is None or value > best.value:
                best = cert
    if best is None:
        raise NoFeasibleCertificate(
            "no feasible KKT certificate; check concavity of the system"
        )
    return best
