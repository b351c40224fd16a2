"""Dense SPD kernels: Cholesky factorization and SPD solves.

Backed by LAPACK through numpy/scipy; the wrapper adds the strict pivot
check used to flag degenerate generated markets.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NotPositiveDefinite

PIVOT_RTOL = 1e-14


class SpdMatrix:
    """Symmetric positive-definite matrix with a lazily computed factor.

    Symmetry is enforced bit-exactly on construction by mirroring the
    upper triangle.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("SpdMatrix requires a square matrix of dim >= 1")
        self.dim = a.shape[0]
        upper = np.triu(a)
        self.entries = upper + np.triu(a, 1).T
        self._factor: np.ndarray | None = None

    @property
    def factor(self) -> np.ndarray:
        if self._factor is None:
            self._factor = cholesky_factor(self)
        return self._factor


def cholesky_factor(a: SpdMatrix) -> np.ndarray:
    """Lower-triangular L with L L^T = a.entries.

    Raises NotPositiveDefinite when LAPACK fails or any pivot falls at or
    below PIVOT_RTOL times the largest diagonal entry.
    """
    m = a.entries
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(lower) ** 2
    if np.any(pivots <= PIVOT_RTOL * m.diagonal().max()):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below threshold for dim {a.dim}"
        )
    return lower


def solve_spd(a: SpdMatrix, b) -> np.ndarray:
    """Solve a x = b using the cached Cholesky factor."""
    lower = a.factor
    return cho_solve((lower, True), np.asarray(b, dtype=np.float64))


def solve_lower(lower: np.ndarray, b) -> np.ndarray:
    """Solve L x = b for lower-triangular L."""
    return solve_triangular(lower, np.asarray(b, dtype=np.float64), lower=True)
