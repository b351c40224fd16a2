"""OneShot control formulas, FOC residual metrics, relative MSE."""

import numpy as np

from pgdpo import merton
from pgdpo.barrier import BarrierSystem, barrier_residual, solve_simplex_weights
from pgdpo.costate import CostateSample
from pgdpo.market import generate_market
from pgdpo.metrics import (
    foc_residuals,
    relative_mse,
    unconstrained_foc_residuals,
)
from pgdpo.oneshot import oneshot_consumption, oneshot_controls
from pgdpo.rng import stream


def oracle_costates(market, cf, t, x):
    lam = cf.costate(t, x)
    slope = cf.costate_slope(t, x)
    pi = np.broadcast_to(cf.pi_star, (t.size, market.n))
    z = slope[:, None] * x[:, None] * (pi @ market.chol)
    return CostateSample(t=t, x=x, lam=lam, dlam_dx=slope, z=z)


def test_unit_marginal_utility_consumption():
    c = oneshot_consumption(np.array([0.0]), np.array([1.0]), gamma=3.0, rho=0.1)
    assert np.isclose(c[0], 1.0)


def test_oracle_costates_reproduce_closed_form_exactly():
    market = generate_market(4, seed=1)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(1, "test")
    t = rng.uniform(0.0, 0.95, 64)
    x = rng.uniform(0.1, 2.0, 64)
    cs = oracle_costates(market, cf, t, x)
    pi, c = oneshot_controls(cs, market, gamma=2.0, rho=0.1, constrained=False)
    want_pi = np.broadcast_to(cf.pi_star, pi.shape)
    assert np.abs(pi - want_pi).max() <= 1e-10
    want_c = cf.consumption(t, x)
    assert np.abs(c - want_c).max() <= 1e-10 * np.abs(want_c).max()


def test_constrained_interior_matches_unconstrained_within_epsilon_order():
    market = generate_market(3, seed=8)  # interior instance (all pi* > 0)
    pi_star, pi0 = merton.optimal_weights(market)
    assert np.all(pi_star > 0) and pi0 > 0
    cf = merton.closed_form(market, market.gamma, 0.1, 1.0, 1.0)
    t = np.array([0.2, 0.5])
    x = np.array([0.8, 1.4])
    cs = oracle_costates(market, cf, t, x)
    pi, _ = oneshot_controls(
        cs, market, gamma=market.gamma, rho=0.1, constrained=True, epsilon=1e-6
    )
    want = np.concatenate([[pi0], pi_star])
    assert np.abs(pi - want[None, :]).max() <= 1e-3
    assert np.abs(pi.sum(axis=1) - 1.0).max() <= 1e-12


def test_constrained_controls_always_feasible():
    market = generate_market(5, seed=3)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(2, "test")
    t = rng.uniform(0.0, 0.9, 32)
    x = rng.uniform(0.1, 2.0, 32)
    cs = oracle_costates(market, cf, t, x)
    pi, c = oneshot_controls(cs, market, gamma=2.0, rho=0.1, constrained=True)
    assert np.all(pi > 0)
    assert np.abs(pi.sum(axis=1) - 1.0).max() <= 1e-8
    assert np.all(c > 0)


def test_oneshot_with_untrained_costates_still_feasible():
    # degenerate warm-up: garbage costates must still yield simplex points
    market = generate_market(3, seed=4)
    rng = stream(3, "test")
    t = rng.uniform(0.0, 0.9, 8)
    x = rng.uniform(0.1, 2.0, 8)
    lam = rng.uniform(0.1, 5.0, 8)
    slope = rng.uniform(-3.0, 0.5, 8)  # includes non-concave entries
    cs = CostateSample(t=t, x=x, lam=lam, dlam_dx=slope, z=np.zeros((8, 3)))
    pi, c = oneshot_controls(cs, market, gamma=2.0, rho=0.1, constrained=True)
    assert np.all(pi > 0)
    assert np.abs(pi.sum(axis=1) - 1.0).max() <= 1e-8
    assert np.all(np.isfinite(c)) and np.all(c > 0)


def test_consumption_foc_residual_zero_for_oneshot_controls():
    market = generate_market(2, seed=5)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(4, "test")
    t = rng.uniform(0.0, 0.9, 16)
    x = rng.uniform(0.1, 2.0, 16)
    cs = oracle_costates(market, cf, t, x)
    pi, c = oneshot_controls(cs, market, gamma=2.0, rho=0.1, constrained=True)
    res = foc_residuals(
        t, x, pi, c, cs.lam, cs.dlam_dx, market, 2.0, 0.1, epsilon=1e-6
    )
    assert res.consumption <= 1e-20
    # converged barrier controls: investment residual at tol^2 level
    assert res.investment <= 1e-18


def test_unconstrained_foc_zero_at_closed_form():
    market = generate_market(3, seed=6)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(5, "test")
    t = rng.uniform(0.0, 0.9, 16)
    x = rng.uniform(0.1, 2.0, 16)
    cs = oracle_costates(market, cf, t, x)
    pi = np.broadcast_to(cf.pi_star, (16, 3))
    c = cf.consumption(t, x)
    res = unconstrained_foc_residuals(
        t, x, pi, c, cs.lam, cs.dlam_dx, market, 2.0, 0.1
    )
    assert res.consumption <= 1e-22
    assert res.investment <= 1e-22


def test_investment_foc_hand_assembly():
    market = generate_market(3, seed=7)
    eps = 1e-4
    rng = stream(6, "test")
    pi = rng.uniform(0.05, 0.5, 4)
    pi = pi / pi.sum()
    lam, slope, x, t = 1.3, -2.1, 1.2, 0.4
    c = 0.7
    res = foc_residuals(
        np.array([t]), np.array([x]), pi[None, :], np.array([c]),
        np.array([lam]), np.array([slope]), market, 2.0, 0.1, eps,
    )
    # independent assembly with plain loops
    grad = np.empty(4)
    grad[0] = lam * x * market.r
    for i in range(3):
        grad[i + 1] = lam * x * market.mu[i] + slope * x * x * float(
            market.sigma_cov.entries[i] @ pi[1:]
        )
    v = grad + eps / pi
    r = v - v.mean()
    want = float(np.mean(r**2))
    assert np.isclose(res.investment, want, rtol=1e-12)
    want_c = (np.exp(-0.1 * t) * c**-2.0 - lam) ** 2
    assert np.isclose(res.consumption, want_c, rtol=1e-12)


def test_relative_mse_identities():
    market = generate_market(2, seed=9)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(7, "test")
    t = rng.uniform(0.0, 0.9, 64)
    x = rng.uniform(0.1, 2.0, 64)
    c_ref = cf.consumption(t, x)
    pi_ref = np.broadcast_to(cf.pi_star, (64, 2))
    exact = relative_mse(t, x, c_ref, pi_ref, cf)
    assert exact.consumption == 0.0 and exact.investment == 0.0
    doubled = relative_mse(t, x, 2.0 * c_ref, 2.0 * pi_ref, cf)
    assert np.isclose(doubled.consumption, 1.0)
    assert np.isclose(doubled.investment, 1.0)
    assert np.isclose(doubled.per_asset_min, (cf.pi_star.min() ** 2) / (cf.pi_star @ cf.pi_star / 2))
    # per-asset decomposition averages back to the scalar
    assert np.isclose(
        (doubled.per_asset_min + doubled.per_asset_max) / 2.0, doubled.investment
    )


def test_relative_mse_excludes_horizon_nodes():
    market = generate_market(2, seed=10)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    t = np.array([0.5, 0.9995])
    x = np.array([1.0, 1.0])
    c = cf.consumption(np.array([0.5, 0.5]), x)  # second node's c is junk
    pi = np.broadcast_to(cf.pi_star, (2, 2))
    out = relative_mse(t, x, c, pi, cf)
    assert out.nodes_used == 1
    assert out.consumption == 0.0


def test_barrier_solution_satisfies_residual_definition():
    market = generate_market(4, seed=11)
    sol = solve_simplex_weights(market, 1.0, -2.0, 1.0, epsilon=1e-6)
    sys = BarrierSystem(market, 1.0, -2.0, 1.0, epsilon=1e-6)
    f = barrier_residual(sys, sol.pi, sol.eta)
    assert np.abs(f).max() <= 1e-10


def test_threaded_solves_match_serial(monkeypatch):
    market = generate_market(4, seed=12)
    cf = merton.closed_form(market, 2.0, 0.1, 1.0, 1.0)
    rng = stream(8, "test")
    t = rng.uniform(0.0, 0.9, 24)
    x = rng.uniform(0.1, 2.0, 24)
    cs = oracle_costates(market, cf, t, x)
    serial, _ = oneshot_controls(cs, market, 2.0, 0.1, constrained=True, workers=1)
    monkeypatch.setenv("PGDPO_WORKERS", "4")
    threaded, _ = oneshot_controls(cs, market, 2.0, 0.1, constrained=True)
    # warm starts differ across chunking, but both converge to tolerance
    assert np.abs(serial - threaded).max() <= 1e-9
