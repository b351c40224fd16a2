"""Barrier Newton solver and its active-set enumeration cross-check."""

import numpy as np
import pytest

from pgdpo import merton
from pgdpo.barrier import (
    BarrierSystem,
    barrier_jacobian,
    barrier_residual,
    kkt_enumerate_oracle,
    newton_solve,
    solve_simplex_weights,
)
from pgdpo.market import MarketParams, generate_market
from pgdpo.rng import stream


def make_system(n, seed, lam=1.0, x=1.0, epsilon=1e-6, gamma=2.0):
    market = generate_market(n, seed=seed, gamma=gamma)
    # CRRA-consistent slope: x d_x lambda = -gamma lambda
    return BarrierSystem(market, lam=lam, lam_slope=-gamma * lam / x, x=x, epsilon=epsilon)


def test_sum_row_is_definitional():
    sys = make_system(3, seed=1)
    pi = np.array([0.4, 0.3, 0.2, 0.1])
    f = barrier_residual(sys, pi, eta=0.5)
    assert f[-1] == pi.sum() - 1.0


def test_riskfree_only_eta():
    # n -> 0 risky assets is modeled by a 1-asset system pinned by hand:
    # with pi0 = 1 the cash FOC gives eta = lam X r + eps
    market = generate_market(1, seed=2)
    sys = BarrierSystem(market, lam=2.0, lam_slope=-4.0, x=1.5, epsilon=1e-3)
    pi = np.array([1.0, 1e-12])
    f0 = barrier_residual(sys, pi, eta=0.0)[0]
    eta_solving_f0 = 2.0 * 1.5 * market.r + 1e-3 / 1.0
    assert np.isclose(f0, eta_solving_f0)


def test_jacobian_matches_finite_difference():
    sys = make_system(3, seed=3, epsilon=1e-4)
    rng = stream(3, "test")
    pi = rng.uniform(0.1, 0.5, 4)
    pi = pi / pi.sum()
    eta = 0.3
    jac = barrier_jacobian(sys, pi, eta)

    h = 1e-7
    fd = np.zeros_like(jac)
    for j in range(4):
        up, dn = pi.copy(), pi.copy()
        up[j] += h
        dn[j] -= h
        fd[:, j] = (barrier_residual(sys, up, eta) - barrier_residual(sys, dn, eta)) / (2 * h)
    fd[:, 4] = (barrier_residual(sys, pi, eta + h) - barrier_residual(sys, pi, eta - h)) / (2 * h)
    scale = np.abs(jac).max()
    assert np.abs(jac - fd).max() <= 1e-6 * scale


def test_jacobian_structure():
    sys = make_system(2, seed=4)
    pi = np.array([0.5, 0.3, 0.2])
    jac = barrier_jacobian(sys, pi, 0.1)
    assert np.array_equal(jac[-1], [1.0, 1.0, 1.0, 0.0])
    assert np.all(jac[:-1, -1] == -1.0)
    # entries involving index 0 have no curvature part
    assert np.isclose(jac[0, 0], -sys.epsilon / pi[0] ** 2)
    assert jac[0, 1] == 0.0 and jac[1, 0] == 0.0


def test_jacobian_hand_assembly_n1():
    market = generate_market(1, seed=5)
    lam, slope, x, eps = 1.2, -2.4, 1.1, 1e-3
    sys = BarrierSystem(market, lam=lam, lam_slope=slope, x=x, epsilon=eps)
    pi = np.array([0.6, 0.4])
    jac = barrier_jacobian(sys, pi, 0.0)
    s11 = slope * x * x * market.sigma_cov.entries[0, 0]
    want = np.array(
        [
            [-eps / 0.36, 0.0, -1.0],
            [0.0, s11 - eps / 0.16, -1.0],
            [1.0, 1.0, 0.0],
        ]
    )
    assert np.allclose(jac, want, atol=1e-14)


def test_uniform_start_feasible():
    sys = make_system(4, seed=6)
    pi = np.full(5, 0.2)
    f = barrier_residual(sys, pi, 0.0)
    assert abs(f[-1]) <= 1e-15


def test_residual_rejects_nonpositive_weights():
    sys = make_system(2, seed=7)
    with pytest.raises(ValueError):
        barrier_residual(sys, np.array([0.5, 0.5, 0.0]), 0.1)


def test_newton_converges_and_interior_matches_closed_form():
    # interior case: unconstrained weights positive with positive cash
    market = generate_market(3, seed=8)
    pi_star, pi0 = merton.optimal_weights(market)
    assert np.all(pi_star > 0) and pi0 > 0
    lam, x = 1.0, 1.0
    sol = solve_simplex_weights(market, lam, -market.gamma * lam / x, x, epsilon=1e-6)
    assert sol.converged and sol.residual_norm <= 1e-10
    want = np.concatenate([[pi0], pi_star])
    assert np.abs(sol.pi - want).max() <= 1e-3
    assert abs(sol.pi.sum() - 1.0) <= 1e-12
    assert np.all(sol.pi > 0)


def test_epsilon_sweep_tightens_interior_gap():
    market = generate_market(2, seed=9)
    pi_star, pi0 = merton.optimal_weights(market)
    want = np.concatenate([[pi0], pi_star])
    gaps = []
    for eps in (1e-2, 1e-4, 1e-6):
        sol = solve_simplex_weights(market, 1.0, -2.0, 1.0, epsilon=eps)
        gaps.append(np.abs(sol.pi - want).max())
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[2] <= 1e-3


def test_bad_asset_weight_is_order_epsilon():
    # one asset with strongly negative excess return gets O(eps) weight
    base = generate_market(2, seed=10)
    mu = base.mu.copy()
    mu[0] = base.r - 0.5
    market = MarketParams(
        n=2, r=base.r, mu=mu, sigma_cov=base.sigma_cov, chol=base.chol,
        pi_base=base.pi_base, gamma=base.gamma, seed=base.seed,
    )
    eps = 1e-6
    sol = solve_simplex_weights(market, 1.0, -2.0, 1.0, epsilon=eps)
    assert sol.converged
    grad = BarrierSystem(market, 1.0, -2.0, 1.0, epsilon=eps).hamiltonian_gradient(sol.pi)
    slack = sol.eta - grad[1]
    assert slack > 0
    assert sol.pi[1] <= 10 * eps / slack


def test_converged_residual_is_fixed_point():
    sys = make_system(5, seed=11, epsilon=1e-5)
    sol = newton_solve(sys)
    f = barrier_residual(sys, sol.pi, sol.eta)
    assert np.abs(f).max() == sol.residual_norm
    assert sol.residual_norm <= 1e-10


def test_newton_convergence_across_sizes():
    for n, seed in ((2, 12), (10, 13), (100, 14)):
        market = generate_market(n, seed=seed)
        sol = solve_simplex_weights(market, 1.3, -2.6, 1.2, epsilon=1e-6)
        assert sol.converged, f"n={n}"
        assert sol.residual_norm <= 1e-10
        assert np.all(sol.pi > 0)
        assert abs(sol.pi.sum() - 1.0) <= 1e-12


def test_continuation_warm_start_is_cheap():
    for n, seed in ((50, 15), (300, 16)):
        market = generate_market(n, seed=seed)
        sol = solve_simplex_weights(market, 1.0, -2.0, 1.0, epsilon=1e-5)
        sys = BarrierSystem(market, 1.0, -2.0, 1.0, epsilon=1e-6)
        resolved = newton_solve(sys, init=sol.pi)
        assert resolved.converged
        assert resolved.iterations <= 15


def test_kkt_interior_certificate():
    market = generate_market(3, seed=8)
    sys = BarrierSystem(market, 1.0, -2.0, 1.0)
    cert = kkt_enumerate_oracle(sys)
    pi_star, pi0 = merton.optimal_weights(market)
    assert cert.active_set == ()
    assert np.all(cert.zeta == 0.0)
    assert np.abs(cert.pi - np.concatenate([[pi0], pi_star])).max() <= 1e-9


def test_kkt_matches_barrier_continuation():
    # pinned weights scale as eps/slack, so the continuation must run deep
    # enough for the weakest slack in the instance set
    for n in range(2, 9):
        market = generate_market(n, seed=20 + n)
        lam, x = 1.0, 1.0
        slope = -market.gamma * lam / x
        sol = solve_simplex_weights(market, lam, slope, x, epsilon=1e-12)
        cert = kkt_enumerate_oracle(BarrierSystem(market, lam, slope, x))
        assert sol.converged
        assert np.abs(sol.pi - cert.pi).max() <= 1e-5, f"n={n}"


def test_kkt_hand_case_bad_single_asset():
    # mu1 < r with concave H: all wealth in cash, positive multiplier
    base = generate_market(1, seed=30)
    market = MarketParams(
        n=1, r=base.r, mu=np.array([base.r - 0.05]), sigma_cov=base.sigma_cov,
        chol=base.chol, pi_base=base.pi_base, gamma=base.gamma, seed=base.seed,
    )
    cert = kkt_enumerate_oracle(BarrierSystem(market, 1.0, -2.0, 1.0))
    assert np.allclose(cert.pi, [1.0, 0.0], atol=1e-12)
    assert cert.active_set == (1,)
    assert cert.zeta[1] > 0.0


def test_kkt_complementary_slackness():
    rng = stream(33, "test")
    for trial in range(5):
        market = generate_market(4, seed=40 + trial)
        lam = float(rng.uniform(0.5, 3.0))
        x = float(rng.uniform(0.3, 1.8))
        sys = BarrierSystem(market, lam, -market.gamma * lam / x, x)
        cert = kkt_enumerate_oracle(sys)
        assert np.all(cert.zeta >= 0.0)
        assert np.abs(cert.zeta * cert.pi).max() <= 1e-12
        grad = sys.hamiltonian_gradient(cert.pi)
        stat = grad - cert.eta + cert.zeta
        assert np.abs(stat).max() <= 1e-9


def test_concavity_guard_applied_on_construction():
    market = generate_market(2, seed=50)
    sys = BarrierSystem(market, lam=1.0, lam_slope=0.5, x=2.0, epsilon=1e-4)
    assert sys.lam_slope == -market.gamma * 1.0 / 2.0
