"""Steady-state solvers: semismooth Newton, coefficient tracking, continuation.

The scalar rescaled equation and the competing system are both solved by
damped Newton iterations on their discrete residuals.  The reaction terms
are only Lipschitz across sign changes, so the Jacobian uses the almost
everywhere derivative with the convention that indicator factors vanish on
the exact zero set (semismooth Newton).

The route from the glued scalar state v to coexistence pairs of the system
goes through a homotopy: at t = 0 the system decouples into a single forced
logistic equation whose solution satisfies alpha*u1 - d*u2 = v exactly, and
at t = 1 the original system is recovered.  Continuation in the competition
strength k warm-starts each solve from the previous one and records how the
pair collapses onto the segregated limit (v+/alpha, v-/d).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import eigen
from .construction import SegregatedState
from .errors import SolverFailure
from .grid import (
    CoefficientProfile,
    Field,
    laplacian,
    normalized_coefficients,
    norms,
    pos_neg_parts,
    sample_coefficients,
    sigma_fields,
)
from .linalg import second_difference_matrix

__all__ = [
    "CoexistenceState",
    "TrackResult",
    "ContinuationRecord",
    "ContinuationResult",
    "newton_scalar",
    "perturb_and_track",
    "solve_decoupled_t0",
    "solve_homotopy",
    "homotopy_residual",
    "continue_in_k",
]

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 80
_MAX_HALVINGS = 50


def _as_field(v) -> Field:
    return v.v if isinstance(v, SegregatedState) else v


@dataclass(frozen=True)
class CoexistenceState:
    """Positive steady pair of the (possibly homotopy-deformed) system."""

    u1: Field
    u2: Field
    k: float
    t: float
    newton_residual: float
    seg_distance: float
    product_mass: float

    def __post_init__(self):
        if np.any(self.u1.values <= 0) or np.any(self.u2.values <= 0):
            raise ValueError("coexistence state must be componentwise strictly positive")


def _scalar_residual(z, mu1n, mu2n, alpha, d, h):
    slopes = np.diff(np.concatenate(([z[-1]], z, [z[0]])))
    lap = (slopes[1:] - slopes[:-1]) / h**2
    zp = np.maximum(z, 0.0)
    zm = -np.minimum(z, 0.0)
    return lap + mu1n * (alpha - z) * zp - mu2n * (d + z) * zm


def _scalar_slope(z, mu1n, mu2n, alpha, d):
    return np.where(
        z > 0, mu1n * (alpha - 2.0 * z), np.where(z < 0, mu2n * (d + 2.0 * z), 0.0)
    )


def newton_scalar(
    profile: CoefficientProfile,
    z0: Field,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> Field:
    """Semismooth Newton for the discrete rescaled scalar equation.

    Converges to sup-norm residual <= tol (damped steps, halving on
    non-decrease).  The returned field is a steady state of the discrete
    equation, suitable as an exact fixed point for the time steppers and
    the t = 0 identity checks.
    """
    grid = z0.grid
    mu1n, mu2n = normalized_coefficients(profile, grid)
    m1, m2 = mu1n.values, mu2n.values
    a, d, h = profile.alpha, profile.d, grid.h
    lap = second_difference_matrix(grid.n_nodes, h)
    z = z0.values.copy()
    res = _scalar_residual(z, m1, m2, a, d, h)
    res_norm = float(np.max(np.abs(res)))
    history = [res_norm]
    for _ in range(max_iter):
        if res_norm <= tol:
            return Field(grid, z)
        jac = (lap + sp.diags(_scalar_slope(z, m1, m2, a, d))).tocsc()
        step = splu(jac).solve(-res)
        damping = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = z + damping * step
            trial_res = _scalar_residual(trial, m1, m2, a, d, h)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < res_norm or trial_norm <= tol:
                break
            damping *= 0.5
        else:
            raise SolverFailure(
                f"scalar Newton stalled at residual {res_norm:.3e} after {len(history)} steps",
                residual=res_norm,
                iterations=len(history),
            )
        z, res, res_norm = trial, trial_res, trial_norm
        history.append(res_norm)
    raise SolverFailure(
        f"scalar Newton did not converge in {max_iter} steps (residual {res_norm:.3e})",
        residual=res_norm,
        iterations=len(history),
    )


@dataclass(frozen=True)
class TrackResult:
    """Outcome of tracking a steady state under perturbed coefficients."""

    field: Field | None
    converged: bool
    sign_changing: bool
    lambda_semilinear: float
    lambda_weighted: float
    message: str

    @property
    def within_neighborhood(self) -> bool:
        return (
            self.converged
            and self.sign_changing
            and self.lambda_semilinear > 0
            and self.lambda_weighted > 0
        )


def perturb_and_track(profile_perturbed: CoefficientProfile, v) -> TrackResult:
    """Newton from v under perturbed coefficients, with stability re-checks.

    Loss of the sign change or of either positive eigenvalue is reported,
    not raised: it signals that the perturbation left the neighborhood in
    which the tracked branch persists.
    """
    v = _as_field(v)
    try:
        tracked = newton_scalar(profile_perturbed, v)
    except SolverFailure as exc:
        return TrackResult(
            field=None,
            converged=False,
            sign_changing=False,
            lambda_semilinear=float("nan"),
            lambda_weighted=float("nan"),
            message=f"Newton failed under perturbation: {exc}",
        )
    sign_changing = bool(tracked.values.min() < 0 < tracked.values.max())
    q = eigen.f1_of(tracked, profile_perturbed)
    lam_s = eigen.principal_scalar(q).lam
    sigma, _ = sigma_fields(tracked, profile_perturbed.d)
    lam_w = eigen.principal_weighted(q, sigma).lam
    ok = sign_changing and lam_s > 0 and lam_w > 0
    return TrackResult(
        field=tracked,
        converged=True,
        sign_changing=sign_changing,
        lambda_semilinear=lam_s,
        lambda_weighted=lam_w,
        message="tracked" if ok else "outside neighborhood: stability or sign change lost",
    )


def _system_fields(profile, grid):
    mu1, mu2, omega = sample_coefficients(profile, grid)
    return mu1.values, mu2.values, omega.values


def solve_decoupled_t0(k: float, v, profile: CoefficientProfile, tol: float = NEWTON_TOL) -> CoexistenceState:
    """Unique positive pair of the decoupled (t = 0) problem near segregation.

    Solves the scalar forced logistic equation

        -u'' = mu1/alpha^2 (alpha - v+) v+  +  (k omega / d) u (v - alpha u)

    by Newton from v+/alpha, then sets u1 = u and u2 = (alpha u1 - v)/d.
    The segregation identity alpha*u1 - d*u2 = v holds exactly by
    construction; alpha*u1 > v+ and u2 > 0 are asserted.
    """
    v = _as_field(v)
    grid = v.grid
    mu1, mu2, omega = _system_fields(profile, grid)
    a, d, h = profile.alpha, profile.d, grid.h
    vv = v.values
    vp = np.maximum(vv, 0.0)
    forcing = mu1 / a**2 * (a - vp) * vp
    kw = k * omega / d
    lap = second_difference_matrix(grid.n_nodes, h)

    def residual(u):
        slopes = np.diff(np.concatenate(([u[-1]], u, [u[0]])))
        return (slopes[1:] - slopes[:-1]) / h**2 + forcing + kw * u * (vv - a * u)

    u = vp / a + 0.01 * max(np.max(vp) / a, 1.0)
    res = residual(u)
    res_norm = float(np.max(np.abs(res)))
    for it in range(NEWTON_MAX_ITER):
        if res_norm <= tol:
            break
        jac = (lap + sp.diags(kw * (vv - 2.0 * a * u))).tocsc()
        step = splu(jac).solve(-res)
        damping = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = u + damping * step
            if np.min(trial) <= 0:
                damping *= 0.5
                continue
            trial_res = residual(trial)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < res_norm or trial_norm <= tol:
                break
            damping *= 0.5
        else:
            raise SolverFailure("decoupled Newton stalled", residual=res_norm, iterations=it)
        u, res, res_norm = trial, trial_res, trial_norm
    else:
        raise SolverFailure("decoupled Newton did not converge", residual=res_norm)

    # alpha*u exceeds v+ by an exponentially small margin away from the sign
    # changes; where that margin is below machine precision the subtraction
    # is pure roundoff, so the strict inequality is checked up to a few ulps.
    fp_allow = 64.0 * np.finfo(float).eps * max(1.0, a * float(np.max(u)))
    if np.any(a * u - vp <= -fp_allow):
        raise SolverFailure("decoupled solution violates alpha*u > v+")
    if np.any(u <= 0):
        raise SolverFailure("decoupled solution lost positivity")
    # u2 from the segregation identity is noise-dominated where the margin
    # sits below roundoff; one system-Newton polish resolves it at its own
    # (tiny, positive) scale.
    u2 = np.maximum((a * u - vv) / d, fp_allow)
    state = solve_homotopy(0.0, k, (Field(grid, u), Field(grid, u2)), profile, tol=tol)
    state = dataclasses.replace(
        state,
        seg_distance=float(
            np.max(np.abs(a * state.u1.values - d * state.u2.values - vv))
        ),
    )
    sys_res = homotopy_residual(state.u1, state.u2, 0.0, k, profile)
    if sys_res > max(100.0 * tol, 1e-9):
        raise SolverFailure(
            f"decoupled pair does not satisfy the t=0 system: residual {sys_res:.3e}"
        )
    return state


def homotopy_residual(u1: Field, u2: Field, t: float, k: float, profile: CoefficientProfile) -> float:
    """Sup norm of the discrete residual of the t-deformed system."""
    r1, r2 = _homotopy_residual_parts(
        u1.values, u2.values, t, k, profile, u1.grid.h, *_system_fields(profile, u1.grid)
    )
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def _periodic_lap(z, h):
    slopes = np.diff(np.concatenate(([z[-1]], z, [z[0]])))
    return (slopes[1:] - slopes[:-1]) / h**2


def _homotopy_residual_parts(u1, u2, t, k, profile, h, mu1, mu2, omega):
    a, d = profile.alpha, profile.d
    w = a * u1 - d * u2
    wp = np.maximum(w, 0.0)
    wm = -np.minimum(w, 0.0)
    coupling = k * omega * u1 * u2
    r1 = (
        _periodic_lap(u1, h)
        + t * mu1 * (1.0 - u1) * u1
        + (1.0 - t) * mu1 / a**2 * (a - wp) * wp
        - coupling
    )
    r2 = (
        d * _periodic_lap(u2, h)
        + t * mu2 * (1.0 - u2) * u2
        + (1.0 - t) * mu2 / d**2 * (d - wm) * wm
        - a * coupling
    )
    return r1, r2


def _homotopy_jacobian(u1, u2, t, k, profile, lap, mu1, mu2, omega):
    a, d = profile.alpha, profile.d
    w = a * u1 - d * u2
    pos = (w > 0).astype(float)
    neg = (w < 0).astype(float)
    kw = k * omega
    # d/dw of (a - w+) w+ is (a - 2w) on {w > 0}; of (d - w-) w- it is
    # -(d + 2w) on {w < 0}; chain rule in u1, u2 gives the four diagonals.
    g1 = (1.0 - t) * mu1 / a**2 * (a - 2.0 * w) * pos
    g2 = (1.0 - t) * mu2 / d**2 * (-(d + 2.0 * w)) * neg
    j11 = lap + sp.diags(t * mu1 * (1.0 - 2.0 * u1) + a * g1 - kw * u2)
    j12 = sp.diags(-d * g1 - kw * u1)
    j21 = sp.diags(a * g2 - a * kw * u2)
    j22 = d * lap + sp.diags(t * mu2 * (1.0 - 2.0 * u2) - d * g2 - a * kw * u1)
    return sp.bmat([[j11, j12], [j21, j22]], format="csc")


def solve_homotopy(
    t: float,
    k: float,
    guess,
    profile: CoefficientProfile,
    reference_v: Field | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> CoexistenceState:
    """Damped semismooth Newton on the coupled t-deformed system.

    ``guess`` is a CoexistenceState or a pair of positive fields.  Steps are
    halved until the residual decreases while the iterate stays positive and
    alpha*u1 - d*u2 keeps both sign regions.  ``reference_v`` (when given)
    is only used for the segregation-distance metric.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if isinstance(guess, CoexistenceState):
        u1, u2 = guess.u1.values.copy(), guess.u2.values.copy()
        grid = guess.u1.grid
    else:
        g1, g2 = guess
        u1, u2 = g1.values.copy(), g2.values.copy()
        grid = g1.grid
    if np.any(u1 <= 0) or np.any(u2 <= 0):
        raise ValueError("homotopy guess must be componentwise positive")
    mu1, mu2, omega = _system_fields(profile, grid)
    lap = second_difference_matrix(grid.n_nodes, grid.h)
    n = grid.n_nodes

    def res_parts(a1, a2):
        return _homotopy_residual_parts(a1, a2, t, k, profile, grid.h, mu1, mu2, omega)

    r1, r2 = res_parts(u1, u2)
    res_norm = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    for it in range(max_iter):
        if res_norm <= tol:
            break
        jac = _homotopy_jacobian(u1, u2, t, k, profile, lap, mu1, mu2, omega)
        step = splu(jac).solve(-np.concatenate([r1, r2]))
        s1, s2 = step[:n], step[n:]
        damping = 1.0
        for _ in range(_MAX_HALVINGS):
            t1, t2 = u1 + damping * s1, u2 + damping * s2
            if np.min(t1) <= 0 or np.min(t2) <= 0:
                damping *= 0.5
                continue
            w = profile.alpha * t1 - profile.d * t2
            if t < 1.0 and not (np.any(w > 0) and np.any(w < 0)):
                # The deformed reaction needs both sign regions of w; a step
                # that wipes one out has left the segregation tube.
                damping *= 0.5
                continue
            n1, n2 = res_parts(t1, t2)
            trial_norm = float(max(np.max(np.abs(n1)), np.max(np.abs(n2))))
            if trial_norm < res_norm or trial_norm <= tol:
                break
            damping *= 0.5
        else:
            raise SolverFailure(
                f"system Newton stalled at t={t}, k={k:.3g} (residual {res_norm:.3e})",
                residual=res_norm,
                iterations=it,
            )
        u1, u2, r1, r2, res_norm = t1, t2, n1, n2, trial_norm
    else:
        raise SolverFailure(
            f"system Newton did not converge at t={t}, k={k:.3g} (residual {res_norm:.3e})",
            residual=res_norm,
        )

    if reference_v is not None:
        seg = float(np.max(np.abs(profile.alpha * u1 - profile.d * u2 - reference_v.values)))
    else:
        seg = float("nan")
    return CoexistenceState(
        u1=Field(grid, u1),
        u2=Field(grid, u2),
        k=k,
        t=t,
        newton_residual=res_norm,
        seg_distance=seg,
        product_mass=float(grid.h * np.sum(u1 * u2)),
    )


@dataclass(frozen=True)
class ContinuationRecord:
    """One link of the continuation chain with its stability diagnostics."""

    state: CoexistenceState
    lambda_1k: float
    eigenpair: tuple[Field, Field]
    h1_dist: float
    holder_dist: float
    lipschitz_norm: float
    sup_u2_on_positive_set: float
    sup_phi_on_negative_set: float
    sup_psi_on_positive_set: float
    lambda_lower_bound: float
    alpha: float
    d: float

    @property
    def z_field(self) -> Field:
        """Combined eigenfunction alpha*phi + d*psi (sup-normalized to 1)."""
        phi, psi = self.eigenpair
        return phi * self.alpha + psi * self.d


@dataclass(frozen=True)
class ContinuationResult:
    records: tuple[ContinuationRecord, ...]
    failure: str | None

    @property
    def states(self) -> tuple[CoexistenceState, ...]:
        return tuple(r.state for r in self.records)


def continue_in_k(
    k_schedule,
    v,
    profile: CoefficientProfile,
    eps0: float = 0.01,
    level_fraction: float = 0.1,
    tol: float = NEWTON_TOL,
    with_eigen: bool = True,
) -> ContinuationResult:
    """Warm-started Newton chain at t = 1 along an increasing k schedule.

    ``v`` is the segregated scalar state (polished to a discrete steady
    state internally).  Each link records the segregation distance, the
    competition mass h*sum(u1*u2), Sobolev/Hölder distances to the
    segregated pair, the principal system eigenpair, and the decay of each
    eigencomponent on the other species' territory.
    """
    k_schedule = [float(k) for k in k_schedule]
    if not k_schedule or any(k <= 0 for k in k_schedule):
        raise ValueError("k_schedule must be a nonempty list of positive values")
    if sorted(k_schedule) != k_schedule:
        raise ValueError("k_schedule must be increasing")
    v = _as_field(v)
    v = newton_scalar(profile, v, tol=tol)
    grid = v.grid
    a, d = profile.alpha, profile.d
    vp, vm = pos_neg_parts(v)
    target1 = vp * (1.0 / a)
    target2 = vm * (1.0 / d)
    level = level_fraction * float(np.max(vp.values))
    pos_set = vp.values > level
    neg_set = vm.values > level
    mu1, mu2, _ = _system_fields(profile, grid)

    guess = (target1 + eps0, target2 + eps0)
    records: list[ContinuationRecord] = []
    failure = None
    for k in k_schedule:
        try:
            state = solve_homotopy(1.0, k, guess, profile, reference_v=v, tol=tol)
        except SolverFailure as exc:
            failure = f"continuation stopped at k = {k:.6g}: {exc}"
            break
        diff1 = state.u1 - target1
        diff2 = state.u2 - target2
        n1 = norms(diff1, 0.5)
        n2 = norms(diff2, 0.5)
        lip1 = norms(state.u1, 0.5).lipschitz
        lip2 = norms(state.u2, 0.5).lipschitz
        if with_eigen:
            eig = eigen.principal_system(state.u1, state.u2, k, profile)
            phi, psi = eig.eigenfunctions
            lam = eig.lam
            sup_phi = float(np.max(phi.values[neg_set])) if neg_set.any() else 0.0
            sup_psi = float(np.max(psi.values[pos_set])) if pos_set.any() else 0.0
        else:
            phi = psi = grid.constant(0.0)
            lam = float("nan")
            sup_phi = sup_psi = float("nan")
        bound = float(
            np.max(np.abs(mu1 * (1.0 - 2.0 * state.u1.values)))
            + np.max(np.abs(mu2 * (1.0 - 2.0 * state.u2.values)))
        )
        records.append(
            ContinuationRecord(
                state=state,
                lambda_1k=lam,
                eigenpair=(phi, psi),
                h1_dist=float(np.hypot(n1.h1_per_period, n2.h1_per_period)),
                holder_dist=float(
                    max(n1.sup + n1.holder_seminorm, n2.sup + n2.holder_seminorm)
                ),
                lipschitz_norm=float(max(lip1, lip2)),
                sup_u2_on_positive_set=float(np.max(state.u2.values[pos_set])),
                sup_phi_on_negative_set=sup_phi,
                sup_psi_on_positive_set=sup_psi,
                lambda_lower_bound=bound,
                alpha=a,
                d=d,
            )
        )
        guess = state
    return ContinuationResult(records=tuple(records), failure=failure)
