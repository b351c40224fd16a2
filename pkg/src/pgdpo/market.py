"""Reproducible synthetic market generation.

Markets are built so the unconstrained optimal portfolio equals a known
baseline: draw a random correlation, scale by per-asset volatilities,
draw and rescale a baseline portfolio, then back-solve the drifts via
mu = r 1 + gamma Sigma pi_base.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMarket, NotPositiveDefinite
from .linalg import SpdMatrix, cholesky_factor
from .rng import stream

MARKET_SCHEMA_VERSION = 1

DEFAULT_RATE = 0.03
DEFAULT_GAMMA = 2.0
DEFAULT_VOL_RANGE = (0.05, 0.5)
DEFAULT_PI_RANGE = (-1.0, 2.0)
DEFAULT_SUM_BAND = (0.2, 0.75)

_CORRELATION_ATTEMPTS = 10
_SHRINK = 0.7


@dataclass(frozen=True)
class MarketParams:
    """Immutable market description.

    mu satisfies mu = r 1 + gamma Sigma pi_base by construction, so the
    unconstrained optimal weights reproduce pi_base.
    """

    n: int
    r: float
    mu: np.ndarray
    sigma_cov: SpdMatrix
    chol: np.ndarray  # lower-triangular V with V V^T = Sigma
    pi_base: np.ndarray
    gamma: float
    seed: int
    excess: np.ndarray = field(init=False)  # mu - r 1

    def __post_init__(self):
        for arr in (self.mu, self.pi_base, self.chol):
            arr.setflags(write=False)
        object.__setattr__(self, "excess", self.mu - self.r)
        self.excess.setflags(write=False)


def random_correlation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-diagonal positive-definite correlation matrix.

    Gram construction G G^T with G an n x (n+2) standard normal, scaled
    to unit diagonal.  On factorization failure the matrix is shrunk
    toward the identity and retried; after 10 failures the market is
    declared degenerate.
    """
    if n < 1:
        raise ValueError("asset count must be >= 1")
    if n == 1:
        return np.ones((1, 1))
    g = rng.standard_normal((n, n + 2))
    gram = g @ g.T
    d = np.sqrt(np.diag(gram))
    corr = gram / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    for _ in range(_CORRELATION_ATTEMPTS):
        try:
            cholesky_factor(SpdMatrix(corr))
            return corr
        except NotPositiveDefinite:
            corr = _SHRINK * corr + (1.0 - _SHRINK) * np.eye(n)
            np.fill_diagonal(corr, 1.0)
    raise DegenerateMarket(f"no positive-definite correlation after "
                           f"{_CORRELATION_ATTEMPTS} attempts (n={n})")


def generate_market(
    n: int,
    r: float = DEFAULT_RATE,
    gamma: float = DEFAULT_GAMMA,
    vol_range=DEFAULT_VOL_RANGE,
    pi_range=DEFAULT_PI_RANGE,
    sum_band=DEFAULT_SUM_BAND,
    seed: int = 0,
) -> MarketParams:
    """Generate a market; identical (n, seed) yield bit-identical output."""
    if n < 1:
        raise ValueError("asset count must be >= 1")
    if not (0.0 < vol_range[0] < vol_range[1]):
        raise ValueError("volatility range must be within (0, inf)")
    if not (pi_range[0] < pi_range[1]):
        raise ValueError("baseline weight range is degenerate")
    if not (0.0 < sum_band[0] < sum_band[1]):
        raise ValueError("gross-exposure band must be within (0, inf)")

    corr = random_correlation(n, stream(seed, "correlation"))
    vols = stream(seed, "volatility").uniform(vol_range[0], vol_range[1], n)
    sigma = SpdMatrix(corr * np.outer(vols, vols))

    pi = stream(seed, "baseline_portfolio").uniform(pi_range[0], pi_range[1], n)
    s = pi.sum()
    if s < sum_band[0] or s > sum_band[1]:
        alpha = sum_band[0] if s < sum_band[0] else sum_band[1]
        pi = pi * (alpha / s)

    mu = r + gamma * (sigma.entries @ pi)
    return MarketParams(
        n=n,
        r=float(r),
        mu=mu,
        sigma_cov=sigma,
        chol=sigma.factor,
        pi_base=pi,
        gamma=float(gamma),
        seed=int(seed),
    )


def save_market(m: MarketParams, path) -> None:
    payload = {
        "schema_version": MARKET_SCHEMA_VERSION,
        "n": m.n,
        "r": m.r,
        "gamma": m.gamma,
        "seed": m.seed,
        "mu": m.mu.tolist(),
        "sigma_cov": m.sigma_cov.entries.tolist(),
        "pi_base": m.pi_base.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_market(path) -> MarketParams:
    with open(path) as fh:
        payload = json.load(fh)
    sigma = SpdMatrix(np.array(payload["sigma_cov"], dtype=np.float64))
    return MarketParams(
        n=int(payload["n"]),
        r=float(payload["r"]),
        mu=np.array(payload["mu"], dtype=np.float64),
        sigma_cov=sigma,
        chol=sigma.factor,
        pi_base=np.array(payload["pi_base"], dtype=np.float64),
        gamma=float(payload["gamma"]),
        seed=int(payload["seed"]),
    )
