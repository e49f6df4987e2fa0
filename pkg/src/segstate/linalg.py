"""Linear-algebra helpers for periodic tridiagonal-plus-corners systems.

All discrete operators in this library are 3-point stencils on a periodic
grid: tridiagonal matrices with two extra corner entries.  Systems
(c*I - tau*Lap) x = b are solved with a rank-one Sherman-Morrison update on
top of a banded Cholesky factorization, so a factorization can be reused
across many right-hand sides (time stepping, inverse iteration).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

__all__ = [
    "PeriodicHelmholtzSolver",
    "second_difference_matrix",
    "scalar_operator_matrix",
]


class PeriodicHelmholtzSolver:
    """Factorized solver for (diag(c) - tau * Lap_per) x = b.

    ``Lap_per`` is the 3-point periodic Laplacian with spacing h.  The
    matrix must be symmetric positive definite, which holds whenever
    c > 0 and tau >= 0.
    """

    def __init__(self, c, tau: float, h: float, n: int):
        c = np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy()
        if np.any(c <= 0) or tau < 0:
            raise ValueError("need c > 0 and tau >= 0 for a positive definite system")
        self.n = n
        off = -tau / h**2
        diag = c + 2.0 * tau / h**2
        # Peel off the periodic corners: M = T + off * w w^T, w = e_0 + e_{n-1}.
        t_diag = diag.copy()
        t_diag[0] -= off
        t_diag[-1] -= off
        ab = np.zeros((2, n))
        ab[0, 1:] = off
        ab[1, :] = t_diag
        self._factor = cholesky_banded(ab, lower=False)
        w = np.zeros(n)
        w[0] = 1.0
        w[-1] = 1.0
        self._tinv_w = cho_solve_banded((self._factor, False), w)
        self._sm_denominator = 1.0 + off * (self._tinv_w[0] + self._tinv_w[-1])
        self._off = off

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = cho_solve_banded((self._factor, False), b)
        if self._off == 0.0:
            return y
        correction = self._off * (y[0] + y[-1]) / self._sm_denominator
        return y - correction * self._tinv_w


def second_difference_matrix(n: int, h: float) -> sp.csr_matrix:
    """Sparse periodic 3-point Laplacian (f_{j-1} - 2 f_j + f_{j+1})/h^2."""
    inv_h2 = 1.0 / h**2
    main = np.full(n, -2.0 * inv_h2)
    off = np.full(n - 1, inv_h2)
    mat = sp.diags([off, main, off], offsets=[-1, 0, 1], format="lil")
    mat[0, n - 1] = inv_h2
    mat[n - 1, 0] = inv_h2
    return mat.tocsr()


def scalar_operator_matrix(q: np.ndarray, h: float) -> sp.csr_matrix:
    """Matrix of -Lap_per - diag(q)."""
    n = len(q)
    return (-second_difference_matrix(n, h) - sp.diags(q)).tocsr()
