"""Market generator invariants and the construction round trip."""

import numpy as np
import pytest

from pgdpo import merton
from pgdpo.market import (
    MarketParams,
    generate_market,
    load_market,
    random_correlation,
    save_market,
)
from pgdpo.linalg import SpdMatrix
from pgdpo.rng import stream


def test_single_asset_correlation():
    assert np.array_equal(random_correlation(1, stream(0, "test")), [[1.0]])


def test_correlation_unit_diagonal_and_bounds():
    c = random_correlation(3, stream(42, "correlation"))
    assert np.array_equal(np.diag(c), np.ones(3))
    off = c[~np.eye(3, dtype=bool)]
    assert np.all(off > -1.0) and np.all(off < 1.0)


def test_correlation_normalization_idempotent():
    c = random_correlation(100, stream(7, "correlation"))
    d = np.sqrt(np.diag(c))
    renorm = c / np.outer(d, d)
    assert np.allclose(renorm, c, atol=0, rtol=0)


def test_hand_drift_single_asset():
    # mu = r + gamma * Sigma * pi = 0.03 + 2 * 0.04 * 0.5 = 0.07
    sigma = SpdMatrix([[0.04]])
    m = MarketParams(
        n=1,
        r=0.03,
        mu=0.03 + 2.0 * (sigma.entries @ np.array([0.5])),
        sigma_cov=sigma,
        chol=sigma.factor,
        pi_base=np.array([0.5]),
        gamma=2.0,
        seed=0,
    )
    assert np.allclose(m.mu, [0.07], atol=1e-15)


def test_zero_baseline_gives_riskfree_drift():
    sigma = SpdMatrix([[0.05, 0.0], [0.0, 0.08]])
    pi = np.zeros(2)
    mu = 0.03 + 2.0 * (sigma.entries @ pi)
    assert np.allclose(mu, 0.03)


def test_generated_market_invariants():
    for n, seed in [(1, 3), (10, 42), (100, 7)]:
        m = generate_market(n, seed=seed)
        vols = np.sqrt(np.diag(m.sigma_cov.entries))
        assert np.all(vols >= 0.05) and np.all(vols <= 0.5)
        corr = m.sigma_cov.entries / np.outer(vols, vols)
        assert np.abs(corr).max() <= 1.0 + 1e-12
        s = m.pi_base.sum()
        assert 0.2 - 1e-9 <= s <= 0.75 + 1e-9
        recomputed = m.r + m.gamma * (m.sigma_cov.entries @ m.pi_base)
        assert np.abs(m.mu - recomputed).max() <= 1e-12


def test_rescale_hits_violated_bound_exactly():
    found = 0
    for seed in range(40):
        rng = stream(seed, "baseline_portfolio")
        raw = rng.uniform(-1.0, 2.0, 10)
        s = raw.sum()
        if s < 0.2 or s > 0.75:
            m = generate_market(10, seed=seed)
            alpha = 0.2 if s < 0.2 else 0.75
            assert abs(m.pi_base.sum() - alpha) <= 1e-10
            found += 1
    assert found > 0


def test_determinism_bit_identical():
    a = generate_market(25, seed=123)
    b = generate_market(25, seed=123)
    assert a.mu.tobytes() == b.mu.tobytes()
    assert a.sigma_cov.entries.tobytes() == b.sigma_cov.entries.tobytes()
    assert a.pi_base.tobytes() == b.pi_base.tobytes()


def test_merton_roundtrip():
    for n, seed in [(1, 5), (10, 42), (100, 11)]:
        m = generate_market(n, seed=seed)
        pi_star, pi0 = merton.optimal_weights(m)
        assert np.abs(pi_star - m.pi_base).max() <= 1e-8
        assert np.isclose(pi0, 1.0 - m.pi_base.sum(), atol=1e-8)


def test_json_roundtrip(tmp_path):
    m = generate_market(10, seed=42)
    path = tmp_path / "market.json"
    save_market(m, path)
    loaded = load_market(path)
    assert loaded.n == m.n
    assert np.array_equal(loaded.mu, m.mu)
    assert np.array_equal(loaded.sigma_cov.entries, m.sigma_cov.entries)
    assert np.array_equal(loaded.pi_base, m.pi_base)
    assert np.array_equal(loaded.chol, m.chol)


def test_validation_errors():
    with pytest.raises(ValueError):
        generate_market(0)
    with pytest.raises(ValueError):
        generate_market(2, vol_range=(0.0, 0.5))
    with pytest.raises(ValueError):
        generate_market(2, sum_band=(-0.1, 0.5))
