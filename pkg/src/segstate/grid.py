"""Periodic spatial discretization and discrete calculus.

One periodicity cell [0, L) is sampled on a uniform node grid x_j = j*h,
h = L/n, with x = L identified with x = 0.  Everything downstream (boundary
value solvers, eigensolvers, time steppers) exchanges `Field` objects living
on a shared `PeriodicGrid`.

The piecewise-constant growth-rate landscape is described by a
`CoefficientProfile`: two species-specific rates mu1, mu2 supported on
disjoint patches of relative widths 2*r1 and 2*r2, separated by neutral
gaps of relative width r0 (so 2*r0 + 2*r1 + 2*r2 = 1), with patch heights
M1 and M2.  In ``combined`` mode both species see the summed landscape
mu1 + mu2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "PeriodicGrid",
    "Field",
    "CoefficientMode",
    "CoefficientProfile",
    "NormReport",
    "build_grid",
    "laplacian",
    "norms",
    "pos_neg_parts",
    "sigma_fields",
    "sample_coefficients",
    "mollify",
]

_BREAKPOINT_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform node grid on one periodicity cell [0, L)."""

    period_L: float
    n_nodes: int
    breakpoints_aligned: bool = True
    max_snap_error: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.period_L) and self.period_L > 0):
            raise ValueError(f"period_L must be positive and finite, got {self.period_L}")
        if self.n_nodes < 16:
            raise ValueError(f"n_nodes must be >= 16, got {self.n_nodes}")

    @property
    def h(self) -> float:
        return self.period_L / self.n_nodes

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.h

    def same_as(self, other: "PeriodicGrid") -> bool:
        return self.period_L == other.period_L and self.n_nodes == other.n_nodes

    def field(self, values) -> "Field":
        return Field(self, values)

    def constant(self, c: float) -> "Field":
        return Field(self, np.full(self.n_nodes, float(c)))


class Field:
    """Real-valued samples on a periodic grid.

    Immutable: the value buffer is write-protected after construction.
    Arithmetic between two fields requires identical grids.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: PeriodicGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_nodes,):
            raise ValueError(
                f"values shape {values.shape} does not match grid with {grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must all be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def _coerce(self, other):
        if isinstance(other, Field):
            if not self.grid.same_as(other.grid):
                raise ValueError("fields live on different grids (period or resolution mismatch)")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __repr__(self):
        return (
            f"Field(n={self.grid.n_nodes}, L={self.grid.period_L:g}, "
            f"range=[{self.values.min():.3g}, {self.values.max():.3g}])"
        )


class CoefficientMode(str, Enum):
    TWO_PATCH = "two_patch"
    COMBINED = "combined"


@dataclass(frozen=True)
class CoefficientProfile:
    """Geometry and heights of the piecewise-constant coefficient landscape.

    ``M1``/``M2`` are the system-level patch heights; the scalar segregated
    equation uses the rescaled heights ``M1/alpha`` and ``M2/d**2`` (see
    :meth:`normalized_heights`).
    """

    r0: float
    r1: float
    r2: float
    M1: float
    M2: float
    alpha: float
    d: float
    mode: CoefficientMode = CoefficientMode.TWO_PATCH
    mollify_width: float = 0.0
    mollify_floor: float = 0.0
    omega_mean: float = 1.0

    def __post_init__(self):
        for name in ("r0", "r1", "r2", "M1", "M2", "alpha", "d", "omega_mean"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if abs(2 * self.r0 + 2 * self.r1 + 2 * self.r2 - 1.0) > 1e-12:
            raise ValueError(
                "patch fractions must satisfy 2*r0 + 2*r1 + 2*r2 = 1, got "
                f"{2 * (self.r0 + self.r1 + self.r2)!r}"
            )
        if self.mollify_width < 0 or self.mollify_floor < 0:
            raise ValueError("mollify_width and mollify_floor must be nonnegative")
        object.__setattr__(self, "mode", CoefficientMode(self.mode))

    def breakpoint_fractions(self) -> np.ndarray:
        """Interior structural points of the unit cell, as fractions of L.

        In order: end of first mu1 half-patch, start of mu2 patch, center of
        mu2 patch, end of mu2 patch, start of last mu1 half-patch, cell end.
        """
        r0, r1, r2 = self.r0, self.r1, self.r2
        return np.array(
            [r1, r1 + r0, r1 + r0 + r2, r1 + r0 + 2 * r2, r1 + 2 * r0 + 2 * r2, 1.0]
        )

    def normalized_heights(self) -> tuple[float, float]:
        """Patch heights of the rescaled scalar equation: (M1/alpha, M2/d^2)."""
        return self.M1 / self.alpha, self.M2 / self.d**2


@dataclass(frozen=True)
class NormReport:
    sup: float
    l2_per_period: float
    h1_per_period: float
    holder_seminorm: float
    gamma: float
    lipschitz: float


def build_grid(L: float, n: int, profile: CoefficientProfile) -> PeriodicGrid:
    """Build the periodic grid and record whether patch breakpoints hit nodes.

    Breakpoints that do not land on nodes are not moved; the grid just
    carries ``breakpoints_aligned=False`` and the worst nearest-node
    distance.  Coefficient sampling and state assembly always use the exact
    breakpoint positions.
    """
    if not (np.isfinite(L) and L > 0):
        raise ValueError(f"L must be positive, got {L}")
    if int(n) != n or n < 16:
        raise ValueError(f"n must be an integer >= 16, got {n}")
    n = int(n)
    h = L / n
    fracs = profile.breakpoint_fractions()
    positions = fracs * L
    nearest = np.round(positions / h) * h
    snap_errors = np.abs(positions - nearest)
    aligned = bool(np.all(snap_errors <= _BREAKPOINT_SNAP_TOL * L))
    return PeriodicGrid(
        period_L=float(L),
        n_nodes=n,
        breakpoints_aligned=aligned,
        max_snap_error=float(snap_errors.max()),
    )


def laplacian(f: Field) -> Field:
    """Second-order 3-point periodic Laplacian (f_{j-1} - 2 f_j + f_{j+1})/h^2."""
    v = f.values
    h2 = f.grid.h**2
    return Field(f.grid, (np.roll(v, 1) - 2.0 * v + np.roll(v, -1)) / h2)


def _pairwise_holder(x: np.ndarray, v: np.ndarray, L: float, gamma: float) -> float:
    """Exhaustive max over node pairs of |v_i - v_j| / dist_per(x_i,x_j)^gamma.

    Chunked row-wise so the n^2 scan stays within a modest memory budget
    even at n = 4096.
    """
    n = len(v)
    best = 0.0
    chunk = max(1, 2**22 // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.abs(x[start:stop, None] - x[None, :])
        dist = np.minimum(dx, L - dx)
        dv = np.abs(v[start:stop, None] - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = dv / dist**gamma
        q[dist == 0.0] = 0.0
        best = max(best, float(q.max()))
    return best


def norms(f: Field, gamma: float = 0.5) -> NormReport:
    """Sup, per-period L2 and H1 norms, Hölder seminorm, Lipschitz norm."""
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    v = f.values
    h = f.grid.h
    L = f.grid.period_L
    x = f.grid.nodes
    sup = float(np.max(np.abs(v)))
    l2 = float(np.sqrt(h * np.sum(v**2)))
    grad = (np.roll(v, -1) - v) / h
    h1 = float(np.sqrt(l2**2 + h * np.sum(grad**2)))
    holder = _pairwise_holder(x, v, L, gamma)
    lip_semi = holder if gamma == 1.0 else _pairwise_holder(x, v, L, 1.0)
    return NormReport(
        sup=sup,
        l2_per_period=l2,
        h1_per_period=h1,
        holder_seminorm=holder,
        gamma=gamma,
        lipschitz=sup + lip_semi,
    )


def pos_neg_parts(f: Field) -> tuple[Field, Field]:
    """Split f = f_plus - f_minus with f_plus, f_minus >= 0 and disjoint support."""
    v = f.values
    return Field(f.grid, np.maximum(v, 0.0)), Field(f.grid, -np.minimum(v, 0.0))


def sigma_fields(z: Field, d: float) -> tuple[Field, Field]:
    """Density weight sigma(z) and its reciprocal-type companion sigma_hat(z).

    sigma = 1 on {z > 0}, 1/d on {z < 0}; sigma_hat = 1 on {z >= 0}, d on
    {z < 0}.  At exact zeros both take the value 1 (a measure-zero
    convention); off {z = 0} the product sigma * sigma_hat is exactly 1.
    """
    if not (np.isfinite(d) and d > 0):
        raise ValueError(f"d must be positive, got {d}")
    v = z.values
    sigma = np.where(v < 0.0, 1.0 / d, 1.0)
    sigma_hat = np.where(v < 0.0, d, 1.0)
    return Field(z.grid, sigma), Field(z.grid, sigma_hat)


def _sample_unit_patches(xi: np.ndarray, profile: CoefficientProfile):
    """Indicator samples of the two unit-cell patch systems at fractions xi.

    Jump points take the right-limit value: a half-open convention
    [lo, hi) on every patch.
    """
    r0, r1, r2 = profile.r0, profile.r1, profile.r2
    in1 = (xi < r1) | (xi >= r1 + 2 * r0 + 2 * r2)
    in2 = (xi >= r1 + r0) & (xi < r1 + r0 + 2 * r2)
    return in1, in2


def sample_coefficients(
    profile: CoefficientProfile, grid: PeriodicGrid
) -> tuple[Field, Field, Field]:
    """Node samples (mu1, mu2, omega) of the scaled coefficient landscape.

    ``two_patch`` mode keeps the two rates on their own patches;
    ``combined`` mode gives both species the summed landscape.  A positive
    ``mollify_width`` smooths both rates afterwards (adding
    ``mollify_floor`` so they become strictly positive).
    """
    xi = np.mod(grid.nodes / grid.period_L, 1.0)
    in1, in2 = _sample_unit_patches(xi, profile)
    mu1 = np.where(in1, profile.M1, 0.0)
    mu2 = np.where(in2, profile.M2, 0.0)
    if profile.mode is CoefficientMode.COMBINED:
        both = mu1 + mu2
        mu1 = both
        mu2 = both.copy()
    f1, f2 = Field(grid, mu1), Field(grid, mu2)
    if profile.mollify_width > 0:
        f1 = mollify(f1, profile.mollify_width, floor=profile.mollify_floor)
        f2 = mollify(f2, profile.mollify_width, floor=profile.mollify_floor)
    omega = grid.constant(profile.omega_mean)
    return f1, f2, omega


def normalized_coefficients(
    profile: CoefficientProfile, grid: PeriodicGrid
) -> tuple[Field, Field]:
    """Coefficient samples of the rescaled scalar equation (heights M1/alpha, M2/d^2)."""
    mu1, mu2, _ = sample_coefficients(profile, grid)
    return mu1 * (1.0 / profile.alpha), mu2 * (1.0 / profile.d**2)


def mollify(f: Field, width: float, floor: float = 0.0) -> Field:
    """Periodic convolution with a unit-mass smooth bump of support width*L.

    The discrete kernel sums to exactly 1, so the field mean is preserved to
    roundoff and nonnegative fields stay nonnegative.  A positive ``floor``
    is added afterwards to make the result strictly positive.
    """
    if not (0 < width < 0.25):
        raise ValueError(f"width must lie in (0, 1/4) as a fraction of L, got {width}")
    grid = f.grid
    n = grid.n_nodes
    half = width * grid.period_L / 2.0
    offsets = grid.nodes.copy()
    offsets[offsets > grid.period_L / 2] -= grid.period_L
    kernel = np.zeros(n)
    inside = np.abs(offsets) < half
    s = offsets[inside] / half
    kernel[inside] = np.exp(-1.0 / (1.0 - s**2))
    total = kernel.sum()
    if total <= 0:
        raise ValueError("mollifier support smaller than one grid cell; refine the grid")
    kernel /= total
    smoothed = np.real(np.fft.ifft(np.fft.fft(f.values) * np.fft.fft(kernel)))
    return Field(grid, smoothed + floor)
