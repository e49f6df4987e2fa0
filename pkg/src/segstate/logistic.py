"""Dirichlet logistic profiles and their boundary-slope map.

The building block of the glued construction is the two-point boundary
value problem

    -w'' = M (A - w) w   on (-R, R),      w(+-R) = nu * A,

with A, M, R > 0 and nu in [1/2, 1).  Its unique positive solution is even,
pinched between nu*A and A, and its boundary slope

    Phi(A, M, nu, R) = w'(-R)

is the quantity the matching construction equates across patches.  Phi is
increasing in R with a finite, closed-form half-line limit

    gamma(A, M, nu) = A * sqrt(A*M) * sqrt(1/3 + nu^2 (2 nu/3 - 1)),

obtained by multiplying the equation by w' and integrating.

Everything is solved in rescaled variables: w(x) = A * W(sqrt(A*M) x) with
W solving -W'' = (1 - W) W on (-rho, rho), rho = sqrt(A*M) * R, W(+-rho) = nu.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .errors import NumericalInconsistency, SolverFailure

__all__ = [
    "LogisticProfile",
    "MonotonicityReport",
    "solve_profile",
    "phi",
    "gamma_limit",
    "phi_table",
    "resolution_for",
]

#: Scaled grid points per unit of rho used when no resolution is given.
POINTS_PER_UNIT = 1500
MIN_POINTS = 64
MAX_POINTS = 80000

_NEWTON_TOL = 1e-10
_NEWTON_MAX_ITER = 60
_MAX_HALVINGS = 50


def resolution_for(rho: float) -> int:
    """Default interval count for a scaled half-length rho (always even)."""
    n = int(np.clip(np.ceil(rho * POINTS_PER_UNIT), MIN_POINTS, MAX_POINTS))
    return n + (n % 2)


def _validate(A, M, nu, R):
    if not (A > 0 and M > 0 and R > 0):
        raise ValueError(f"A, M, R must be positive, got A={A}, M={M}, R={R}")
    if not (0.5 <= nu < 1.0):
        raise ValueError(f"nu must lie in [1/2, 1), got {nu}")


@lru_cache(maxsize=8192)
def _solve_scaled(rho: float, nu: float, n: int) -> tuple:
    """Damped Newton for -W'' = (1 - W) W on (-rho, rho), W(+-rho) = nu.

    Returns (node positions, values) as tuples so the cache entries stay
    immutable.  n is the interval count (kept even so x = 0 is a node).
    """
    if n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} intervals, got {n}")
    if n % 2:
        n += 1
    x = np.linspace(-rho, rho, n + 1)
    h = x[1] - x[0]
    # Nodal values are stored to eps, so the discrete residual cannot drop
    # below ~eps/h^2; widen the target accordingly on very fine grids.
    tol = max(_NEWTON_TOL, 2.0 * np.finfo(float).eps / h**2)
    # Initial guess: parabola between the boundary value and the carrying
    # capacity, inside the sub/super-solution bracket.
    w = nu + (1.0 - nu) * (1.0 - (x / rho) ** 2)
    w[0] = w[-1] = nu

    def residual(vals):
        interior = vals[1:-1]
        # Difference neighbors first: avoids the eps/h^2 cancellation floor.
        slopes = np.diff(vals)
        lap = (slopes[1:] - slopes[:-1]) / h**2
        return lap + (1.0 - interior) * interior

    res = residual(w)
    res_norm = np.max(np.abs(res))
    for _ in range(_NEWTON_MAX_ITER):
        if res_norm <= tol:
            break
        m = n - 1
        ab = np.zeros((3, m))
        ab[0, 1:] = 1.0 / h**2
        ab[1, :] = -2.0 / h**2 + 1.0 - 2.0 * w[1:-1]
        ab[2, :-1] = 1.0 / h**2
        step = solve_banded((1, 1), ab, -res)
        damping = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = w.copy()
            trial[1:-1] = w[1:-1] + damping * step
            trial_res = residual(trial)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < res_norm or trial_norm <= tol:
                break
            damping *= 0.5
        else:
            raise SolverFailure(
                f"logistic Newton stalled at residual {res_norm:.3e} (rho={rho}, nu={nu})",
                residual=res_norm,
            )
        w = trial
        res, res_norm = trial_res, trial_norm
    else:
        raise SolverFailure(
            f"logistic Newton did not converge (rho={rho}, nu={nu}), residual {res_norm:.3e}",
            residual=res_norm,
        )
    return tuple(x), tuple(w)


@dataclass(frozen=True)
class LogisticProfile:
    """Solved Dirichlet logistic profile on [-R, R]."""

    A: float
    M: float
    nu: float
    R: float
    n: int
    values: np.ndarray  # on n+1 uniform nodes of [-R, R]

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.n + 1)

    @property
    def center_value(self) -> float:
        return float(self.values[self.n // 2])

    def interpolate(self, x) -> np.ndarray:
        """Cubic-spline evaluation at arbitrary points of [-R, R]."""
        spline = CubicSpline(self.nodes, self.values)
        return spline(np.clip(x, -self.R, self.R))

    def boundary_slope_fd(self) -> float:
        """One-sided second-order slope at -R."""
        h = 2.0 * self.R / self.n
        w = self.values
        return float((-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h))


def solve_profile(A: float, M: float, nu: float, R: float, n: int | None = None) -> LogisticProfile:
    """Solve the logistic Dirichlet problem; values on n+1 uniform nodes."""
    _validate(A, M, nu, R)
    rho = float(np.sqrt(A * M) * R)
    if n is None:
        n = resolution_for(rho)
    n = int(n) + (int(n) % 2)
    _, w_scaled = _solve_scaled(rho, float(nu), n)
    values = A * np.asarray(w_scaled)
    values[0] = values[-1] = nu * A
    return LogisticProfile(A=A, M=M, nu=nu, R=R, n=n, values=values)


def _energy_slope_scaled(nu: float, center: float) -> float:
    """Boundary slope of the scaled profile from the first-integral identity.

    Multiplying -W'' = (1 - W) W by W' and integrating from the boundary to
    the (critical) center gives W'(-rho)^2 = 2 [ (m^2 - nu^2)/2 - (m^3 - nu^3)/3 ]
    with m = W(0).
    """
    val = (center**2 - nu**2) - 2.0 / 3.0 * (center**3 - nu**3)
    return float(np.sqrt(max(val, 0.0)))


def phi(A: float, M: float, nu: float, R: float, n: int | None = None) -> float:
    """Boundary slope w'(-R), cross-checked two independent ways.

    Route (a): one-sided finite difference on the solved profile.
    Route (b): the first-integral identity using the center value.
    Returns (b); raises NumericalInconsistency if (a) disagrees beyond
    max(1e-6, 10 h^2) relative, h being the scaled spacing.
    """
    _validate(A, M, nu, R)
    rho = float(np.sqrt(A * M) * R)
    if n is None:
        n = resolution_for(rho)
    n = int(n) + (int(n) % 2)
    _, w_scaled = _solve_scaled(rho, float(nu), n)
    w_scaled = np.asarray(w_scaled)
    h = 2.0 * rho / n
    slope_fd = (-3.0 * w_scaled[0] + 4.0 * w_scaled[1] - w_scaled[2]) / (2.0 * h)
    slope_energy = _energy_slope_scaled(nu, float(w_scaled[n // 2]))
    scale = A * np.sqrt(A * M)
    tol = max(1e-6, 10.0 * h**2)
    # For slopes near zero (tiny R or nu near 1) the relative check is
    # compared against a small floor on the scaled slope instead.
    if abs(slope_fd - slope_energy) > tol * max(slope_energy, 1e-4):
        raise NumericalInconsistency(
            "boundary-slope cross-check failed: "
            f"fd={scale * slope_fd:.12g}, energy={scale * slope_energy:.12g}, "
            f"rel diff {abs(slope_fd - slope_energy) / slope_energy:.3e} > {tol:.3e}"
        )
    return float(scale * slope_energy)


def slope_routes(
    A: float, M: float, nu: float, R: float, n: int | None = None
) -> tuple[float, float, float]:
    """Both boundary-slope routes (finite difference, first integral).

    Returns (fd_slope, energy_slope, scaled_spacing), the slopes in original
    units; used to audit the agreement of the two routes directly.
    """
    _validate(A, M, nu, R)
    rho = float(np.sqrt(A * M) * R)
    if n is None:
        n = resolution_for(rho)
    n = int(n) + (int(n) % 2)
    _, w_scaled = _solve_scaled(rho, float(nu), n)
    w_scaled = np.asarray(w_scaled)
    h = 2.0 * rho / n
    slope_fd = (-3.0 * w_scaled[0] + 4.0 * w_scaled[1] - w_scaled[2]) / (2.0 * h)
    slope_energy = _energy_slope_scaled(nu, float(w_scaled[n // 2]))
    scale = A * np.sqrt(A * M)
    return float(scale * slope_fd), float(scale * slope_energy), h


def gamma_limit(A: float, M: float, nu: float) -> float:
    """Closed-form half-line limit of the boundary slope as R -> infinity."""
    if not (A > 0 and M > 0):
        raise ValueError(f"A and M must be positive, got A={A}, M={M}")
    if not (0.5 <= nu < 1.0):
        raise ValueError(f"nu must lie in [1/2, 1), got {nu}")
    return float(A * np.sqrt(A * M) * np.sqrt(1.0 / 3.0 + nu**2 * (2.0 * nu / 3.0 - 1.0)))


@dataclass(frozen=True)
class MonotonicityReport:
    """Tabulated boundary slopes with the expected monotonicity checks."""

    nu_values: tuple
    R_values: tuple
    table: np.ndarray  # shape (len(nu), len(R))
    increasing_in_R: bool
    decreasing_in_nu: bool
    below_gamma: bool
    violations: tuple

    @property
    def all_ok(self) -> bool:
        return self.increasing_in_R and self.decreasing_in_nu and self.below_gamma


def phi_table(A: float, M: float, nu_list, R_list, n: int | None = None) -> MonotonicityReport:
    """Tabulate Phi over a (nu, R) grid and check its monotone structure."""
    nu_values = tuple(float(v) for v in nu_list)
    R_values = tuple(float(v) for v in R_list)
    if list(nu_values) != sorted(nu_values) or list(R_values) != sorted(R_values):
        raise ValueError("nu_list and R_list must be sorted increasingly")
    table = np.array([[phi(A, M, nu, R, n) for R in R_values] for nu in nu_values])
    violations = []
    inc_R = True
    for i, nu in enumerate(nu_values):
        if not np.all(np.diff(table[i]) > 0):
            inc_R = False
            violations.append(f"Phi not strictly increasing in R at nu={nu}")
    dec_nu = True
    for j, R in enumerate(R_values):
        if not np.all(np.diff(table[:, j]) < 0):
            dec_nu = False
            violations.append(f"Phi not strictly decreasing in nu at R={R}")
    below = True
    for i, nu in enumerate(nu_values):
        bound = gamma_limit(A, M, nu)
        if not np.all(table[i] < bound):
            below = False
            violations.append(f"Phi >= gamma limit at nu={nu}")
    return MonotonicityReport(
        nu_values=nu_values,
        R_values=R_values,
        table=table,
        increasing_in_R=inc_R,
        decreasing_in_nu=dec_nu,
        below_gamma=below,
        violations=tuple(violations),
    )
