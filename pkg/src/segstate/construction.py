"""Glued sign-changing periodic steady states on piecewise-constant landscapes.

The scalar segregated equation in rescaled form,

    -v'' = mu1 (alpha - v) v+  -  mu2 (d + v) v-,

is solved on one periodicity cell by juxtaposing five explicit pieces: a
positive logistic arch over each mu1 half-patch, a negative logistic arch
over the mu2 patch, and two affine ramps across the neutral gaps.  The free
parameter is the boundary level nu at which the positive arch meets the
ramp; it is fixed by matching the ramp slope leaving the positive arch with
the slope entering the negative arch.

With Phi1(nu, L) and Phi2(nu, L) the boundary slopes of the two arches, the
ramp reaches level

    delta(nu, L) = -Phi1(nu, L) * r0 * L + alpha * nu

at the far side of the gap, and the matching mismatch is

    psi(nu, L) = Phi1(nu, L) - Phi2(-delta(nu, L)/d, L).

Both maps are monotone in nu, so every threshold below is found by plain
bisection: L0 is where delta(1/2, .) first reaches -d, (nu_lower, nu_upper)
bracket the admissible window delta in (-d, -d/2], and the construction
works for all L above the least L_bar with psi(nu_upper, L) < 0.  A
computable upper bound L_star for L_bar solves
r0 * L * Phi2(1/2, L) = max(alpha + d/2, alpha/2 + d).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import logistic
from .errors import AssemblyError, NoRootError, NumericalInconsistency
from .grid import (
    CoefficientMode,
    CoefficientProfile,
    Field,
    PeriodicGrid,
    build_grid,
    laplacian,
    normalized_coefficients,
)

__all__ = [
    "MatchingData",
    "ThresholdData",
    "SegregatedState",
    "delta",
    "find_L0",
    "nu_bounds",
    "psi",
    "find_L_threshold",
    "find_nu",
    "assemble_v",
    "interior_residual_l2",
    "residual_weak_form",
]

ROOT_RTOL = 1e-8
ROOT_MAX_ITER = 200
_NU_EDGE = 1e-9  # offset from the open endpoint nu = 1


def _bisect(f, lo: float, hi: float, rtol: float = ROOT_RTOL) -> float:
    """Bisection for a sign change on [lo, hi], relative tolerance on x."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoRootError(f"no sign change on [{lo:.6g}, {hi:.6g}]: f={flo:.3g}, {fhi:.3g}")
    for _ in range(ROOT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * max(abs(lo), abs(hi)):
            return mid
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _arch_resolution(rho: float, points_per_unit: int | None) -> int | None:
    if points_per_unit is None:
        return None
    n = int(max(logistic.MIN_POINTS, np.ceil(rho * points_per_unit)))
    return n + (n % 2)


def phi1(nu: float, L: float, profile: CoefficientProfile, points_per_unit: int | None = None) -> float:
    """Boundary slope of the positive arch: Phi(alpha, M1/alpha, nu, r1*L)."""
    m1, _ = profile.normalized_heights()
    rho = np.sqrt(profile.alpha * m1) * profile.r1 * L
    return logistic.phi(profile.alpha, m1, nu, profile.r1 * L, _arch_resolution(rho, points_per_unit))


def phi2(nu: float, L: float, profile: CoefficientProfile, points_per_unit: int | None = None) -> float:
    """Boundary slope of the negative arch: Phi(d, M2/d^2, nu, r2*L)."""
    _, m2 = profile.normalized_heights()
    rho = np.sqrt(profile.d * m2) * profile.r2 * L
    return logistic.phi(profile.d, m2, nu, profile.r2 * L, _arch_resolution(rho, points_per_unit))


def delta(nu: float, L: float, profile: CoefficientProfile, points_per_unit: int | None = None) -> float:
    """Level reached by the descending ramp: -Phi1(nu, L) * r0 * L + alpha * nu.

    Strictly increasing in nu at fixed L.
    """
    if not (0.5 <= nu < 1.0):
        raise ValueError(f"nu must lie in [1/2, 1), got {nu}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    return -phi1(nu, L, profile, points_per_unit) * profile.r0 * L + profile.alpha * nu


@dataclass(frozen=True)
class MatchingData:
    """Matched boundary data of the glued state at a given period."""

    L: float
    nu_lower: float
    nu_upper: float
    nu_star: float
    phi1_at_nu: float
    phi2_at_image: float
    delta_at_nu: float


@dataclass(frozen=True)
class ThresholdData:
    """Characteristic periods of the construction."""

    L0: float
    L_bar: float
    L_star: float
    sign_change_found: bool


def find_L0(profile: CoefficientProfile, points_per_unit: int | None = None) -> float:
    """Least period at which the ramp from nu = 1/2 reaches the level -d."""

    def g(L):
        return delta(0.5, L, profile, points_per_unit) + profile.d

    lo = 1e-3
    while g(lo) < 0:
        lo *= 1e-3
        if lo < 1e-12:
            raise NoRootError("delta(1/2, L) + d negative even for tiny L")
    hi = max(1.0, 2 * lo)
    for _ in range(80):
        if g(hi) < 0:
            break
        hi *= 2.0
        if hi > 1e9:
            raise NoRootError("delta(1/2, L) never reaches -d up to L = 1e9")
    return _bisect(g, lo, hi)


def nu_bounds(
    L: float, profile: CoefficientProfile, points_per_unit: int | None = None
) -> tuple[float, float]:
    """Window (nu_lower, nu_upper) with delta = -d and -d/2 respectively."""
    d = profile.d
    if delta(0.5, L, profile, points_per_unit) >= -d:
        raise ValueError(f"L = {L:.6g} is at or below the matching threshold L0")
    hi = 1.0 - _NU_EDGE
    nu_lower = _bisect(lambda nu: delta(nu, L, profile, points_per_unit) + d, 0.5, hi)
    nu_upper = _bisect(lambda nu: delta(nu, L, profile, points_per_unit) + d / 2, nu_lower, hi)
    return nu_lower, nu_upper


def psi(nu: float, L: float, profile: CoefficientProfile, points_per_unit: int | None = None) -> float:
    """Slope mismatch Phi1(nu, L) - Phi2(-delta(nu, L)/d, L); decreasing in nu.

    Defined for nu with -delta(nu, L)/d in [1/2, 1); the endpoints of the
    window are themselves bisection roots, so image levels within root
    tolerance of the boundary are clamped onto it.
    """
    dl = delta(nu, L, profile, points_per_unit)
    image = -dl / profile.d
    if 0.5 - 1e-6 <= image < 0.5:
        image = 0.5
    elif 1.0 <= image <= 1.0 + 1e-6:
        image = 1.0 - _NU_EDGE
    if not (0.5 <= image < 1.0):
        raise ValueError(
            f"nu = {nu:.8g} is outside the matching window: -delta/d = {image:.8g} not in [1/2, 1)"
        )
    return phi1(nu, L, profile, points_per_unit) - phi2(image, L, profile, points_per_unit)


def _nu_upper_only(L: float, profile: CoefficientProfile, points_per_unit: int | None) -> float:
    """Root of delta(., L) = -d/2 alone (enough for the threshold scan)."""
    d = profile.d
    if delta(0.5, L, profile, points_per_unit) >= -d / 2:
        raise ValueError(f"L = {L:.6g} too small: delta(1/2, L) has not reached -d/2")
    return _bisect(
        lambda nu: delta(nu, L, profile, points_per_unit) + d / 2, 0.5, 1.0 - _NU_EDGE
    )


def _psi_at_upper(L: float, profile: CoefficientProfile, points_per_unit: int | None) -> float:
    """psi evaluated at nu_upper(L), where the image level is exactly 1/2."""
    nu_up = _nu_upper_only(L, profile, points_per_unit)
    return phi1(nu_up, L, profile, points_per_unit) - phi2(0.5, L, profile, points_per_unit)


@lru_cache(maxsize=64)
def find_L_threshold(
    profile: CoefficientProfile, points_per_unit: int | None = None
) -> ThresholdData:
    """Construction threshold L_bar, with L0 and the upper estimate L_star.

    L_bar is the least period with psi(nu_upper(L), L) < 0.  In symmetric
    configurations (alpha = d, M1 = M2, r1 = r2) the mismatch at nu_upper is
    negative for every admissible period, so L_bar collapses onto L0 (and
    L_star coincides as well); ``sign_change_found`` records which case
    occurred.
    """
    L0 = find_L0(profile, points_per_unit)
    target = max(profile.alpha + profile.d / 2, profile.alpha / 2 + profile.d)

    def gap(L):
        return profile.r0 * L * phi2(0.5, L, profile, points_per_unit) - target

    lo = L0 * 1e-3
    hi = L0
    for _ in range(80):
        if gap(hi) > 0:
            break
        hi *= 2.0
        if hi > 1e9:
            raise NoRootError("r0 * L * Phi2(1/2, L) never exceeds its target")
    L_star = _bisect(gap, lo, hi)

    # Scan for the last sign change of psi(nu_upper(L), L) above L0.
    L_cap = max(2.0 * L_star, 2.0 * L0)
    grid_L = np.geomspace(L0 * (1 + 1e-6), L_cap, 48)
    values = np.array([_psi_at_upper(L, profile, points_per_unit) for L in grid_L])
    if values[-1] >= 0:
        raise NoRootError(
            f"psi(nu_upper, L) still nonnegative at L = {L_cap:.6g}; no construction threshold found"
        )
    nonneg = np.nonzero(values >= 0)[0]
    if len(nonneg) == 0:
        L_bar = L0
        found = False
    else:
        i = int(nonneg[-1])
        L_bar = _bisect(
            lambda L: _psi_at_upper(L, profile, points_per_unit),
            grid_L[i],
            grid_L[i + 1],
            rtol=1e-6,
        )
        found = True
    if L_bar > L_star * (1 + 1e-6):
        raise NumericalInconsistency(
            f"threshold ordering violated: L_bar = {L_bar:.10g} exceeds L_star = {L_star:.10g}"
        )
    return ThresholdData(L0=L0, L_bar=L_bar, L_star=L_star, sign_change_found=found)


def find_nu(
    L: float, profile: CoefficientProfile, points_per_unit: int | None = None
) -> MatchingData:
    """Matched boundary level nu_star with psi(nu_star, L) = 0."""
    nu_lower, nu_upper = nu_bounds(L, profile, points_per_unit)
    s_upper = phi1(nu_upper, L, profile, points_per_unit) - phi2(0.5, L, profile, points_per_unit)
    if s_upper >= 0:
        raise ValueError(
            f"L = {L:.6g} is below the construction threshold: psi(nu_upper) = {s_upper:.3e} >= 0"
        )
    # nu_lower is itself a bisection root, so just above it the image level
    # -delta/d may still sit marginally outside [1/2, 1); walk the lower
    # bracket up until psi is defined and positive there.
    window = nu_upper - nu_lower
    lo = None
    for frac in (1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
        candidate = nu_lower + frac * window
        try:
            if psi(candidate, L, profile, points_per_unit) > 0:
                lo = candidate
                break
        except ValueError:
            continue
    if lo is None:
        raise NoRootError(
            f"could not bracket the matching root at L = {L:.6g}: psi never positive above nu_lower"
        )
    nu_star = _bisect(lambda nu: psi(nu, L, profile, points_per_unit), lo, nu_upper)
    dl = delta(nu_star, L, profile, points_per_unit)
    return MatchingData(
        L=L,
        nu_lower=nu_lower,
        nu_upper=nu_upper,
        nu_star=nu_star,
        phi1_at_nu=phi1(nu_star, L, profile, points_per_unit),
        phi2_at_image=phi2(-dl / profile.d, L, profile, points_per_unit),
        delta_at_nu=dl,
    )


@dataclass(frozen=True)
class SegregatedState:
    """Glued sign-changing steady state with its construction metadata."""

    grid: PeriodicGrid
    v: Field
    matching: MatchingData
    profile: CoefficientProfile
    residual_l2: float

    @property
    def zero_crossings(self) -> tuple[float, float]:
        """Positions where the two affine ramps cross zero."""
        p, m, L = self.profile, self.matching, self.grid.period_L
        x_desc = p.r1 * L + m.nu_star * p.alpha / m.phi1_at_nu
        x_asc = (1 - p.r1) * L - m.nu_star * p.alpha / m.phi1_at_nu
        return x_desc, x_asc

    def evaluate(self, x) -> np.ndarray:
        """Evaluate the glued state at arbitrary positions (periodically)."""
        return _evaluate_pieces(
            np.mod(np.asarray(x, dtype=float), self.grid.period_L),
            self.grid.period_L,
            self.profile,
            self.matching,
            self._w1,
            self._w2,
        )


def _evaluate_pieces(x, L, profile, matching, w1, w2):
    p = profile
    b1 = p.r1 * L
    b2 = (p.r1 + p.r0) * L
    c2 = (p.r1 + p.r0 + p.r2) * L
    b3 = (p.r1 + p.r0 + 2 * p.r2) * L
    b4 = (p.r1 + 2 * p.r0 + 2 * p.r2) * L
    slope = matching.phi1_at_nu
    level = matching.nu_star * p.alpha
    out = np.empty_like(x)
    sel = x < b1
    out[sel] = w1.interpolate(x[sel])
    sel = (x >= b1) & (x < b2)
    out[sel] = level - slope * (x[sel] - b1)
    sel = (x >= b2) & (x < b3)
    out[sel] = -w2.interpolate(x[sel] - c2)
    sel = (x >= b3) & (x < b4)
    out[sel] = slope * (x[sel] - (L - b1)) + level
    sel = x >= b4
    out[sel] = w1.interpolate(x[sel] - L)
    return out


def assemble_v(
    L: float,
    profile: CoefficientProfile,
    n: int,
    matching: MatchingData | None = None,
    points_per_unit: int | None = None,
) -> SegregatedState:
    """Assemble the five-piece glued state on an n-node periodic grid.

    The negative arch is glued in as minus the positive logistic profile for
    parameters (d, M2/d^2): continuity of value and slope at all four
    junctions is asserted (mismatch beyond 10 h raises AssemblyError).
    """
    grid = build_grid(L, n, profile)
    if matching is None:
        matching = find_nu(L, profile, points_per_unit)
    p = profile
    m1n, m2n = p.normalized_heights()
    nu_image = -matching.delta_at_nu / p.d
    rho1 = np.sqrt(p.alpha * m1n) * p.r1 * L
    rho2 = np.sqrt(p.d * m2n) * p.r2 * L
    w1 = logistic.solve_profile(
        p.alpha, m1n, matching.nu_star, p.r1 * L, _arch_resolution(rho1, points_per_unit)
    )
    w2 = logistic.solve_profile(
        p.d, m2n, nu_image, p.r2 * L, _arch_resolution(rho2, points_per_unit)
    )
    values = _evaluate_pieces(grid.nodes, L, p, matching, w1, w2)
    v = Field(grid, values)

    # Value/slope continuity at the four junctions, from the closed forms.
    slope = matching.phi1_at_nu
    level = matching.nu_star * p.alpha
    checks = [
        (abs(w1.interpolate(p.r1 * L) - level), "value at end of positive arch"),
        (abs(w1.boundary_slope_fd() - slope), "slope leaving positive arch"),
        (abs(-w2.interpolate(-p.r2 * L) - matching.delta_at_nu), "value entering negative arch"),
        (abs(w2.boundary_slope_fd() - matching.phi2_at_image), "slope entering negative arch"),
        (abs(matching.phi1_at_nu - matching.phi2_at_image), "slope matching across the gap"),
    ]
    for mismatch, what in checks:
        if mismatch > 10.0 * grid.h:
            raise AssemblyError(f"junction mismatch ({what}): {mismatch:.3e} > 10 h = {10 * grid.h:.3e}")

    state = SegregatedState(
        grid=grid, v=v, matching=matching, profile=p, residual_l2=float("nan")
    )
    object.__setattr__(state, "_w1", w1)
    object.__setattr__(state, "_w2", w2)
    object.__setattr__(state, "residual_l2", interior_residual_l2(state))
    return state


def _scalar_reaction(v: np.ndarray, mu1n: np.ndarray, mu2n: np.ndarray, alpha: float, d: float):
    vp = np.maximum(v, 0.0)
    vm = -np.minimum(v, 0.0)
    return mu1n * (alpha - v) * vp - mu2n * (d + v) * vm


def _kink_mask(grid: PeriodicGrid, profile: CoefficientProfile, cells: int) -> np.ndarray:
    """True at nodes farther than `cells` spacings from every junction."""
    L = grid.period_L
    p = profile
    kinks = np.array([p.r1, p.r1 + p.r0, p.r1 + p.r0 + 2 * p.r2, p.r1 + 2 * p.r0 + 2 * p.r2]) * L
    x = grid.nodes
    keep = np.ones(grid.n_nodes, dtype=bool)
    for k in kinks:
        dist = np.abs(x - k)
        dist = np.minimum(dist, L - dist)
        keep &= dist > cells * grid.h
    return keep


def interior_residual_l2(
    state: SegregatedState,
    exclusion_cells: int = 2,
    mode: CoefficientMode | None = None,
) -> float:
    """Discrete L2 residual of the rescaled equation away from the junctions.

    The glued state has curvature jumps at the four junctions, where the
    3-point Laplacian is only first-order accurate; nodes within
    ``exclusion_cells`` spacings of a junction are left out so the norm
    reflects the interior O(h^2) truncation.
    """
    profile = state.profile if mode is None else dataclasses.replace(state.profile, mode=mode)
    mu1n, mu2n = normalized_coefficients(profile, state.grid)
    r = laplacian(state.v).values + _scalar_reaction(
        state.v.values, mu1n.values, mu2n.values, profile.alpha, profile.d
    )
    keep = _kink_mask(state.grid, profile, exclusion_cells)
    return float(np.sqrt(state.grid.h * np.sum(r[keep] ** 2)))


def residual_weak_form(state: SegregatedState, mode: CoefficientMode | None = None) -> float:
    """Max hat-function-tested weak residual of the rescaled equation.

    Tests the state against every nodal hat function using the
    piecewise-linear interpolant, which is insensitive to the curvature
    jumps; returns max_j |<F(v), hat_j>|.
    """
    profile = state.profile if mode is None else dataclasses.replace(state.profile, mode=mode)
    mu1n, mu2n = normalized_coefficients(profile, state.grid)
    v = state.v.values
    h = state.grid.h
    f = _scalar_reaction(v, mu1n.values, mu2n.values, profile.alpha, profile.d)
    stiffness = -h * laplacian(state.v).values
    mass = h * (np.roll(f, 1) + 4.0 * f + np.roll(f, -1)) / 6.0
    return float(np.max(np.abs(stiffness - mass)))
