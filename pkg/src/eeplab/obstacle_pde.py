"""Obstacle-problem solver for the American value surface in log-price space.

The value function solves, backward from the payoff at maturity,

    min(u - psi, -u_t - L_BS u + r u) = 0,

discretized on a uniform log-price grid where the generator has constant
coefficients: sum_i (r - d_i - a_ii/2) dv/dy_i + 1/2 sum_ij a_ij d2v/dy_i dy_j
- r v (central differences, cross term by the 4-point stencil). Each backward
theta-step is a linear complementarity problem solved by projected SOR;
``solve_penalized`` replaces the constraint with a penalty term n (u - psi)-
handled by semi-smooth Newton, which approximates the same surface from
below as n grows.

Dirichlet boundary u = psi on the truncated box (payoff-asymptotic choice);
the 5-standard-deviation half-width keeps the boundary influence at the spot
below 1e-5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.linalg import splu

from .errors import (
    ExtrapolationError,
    SolverFailureError,
    UnsupportedDimensionError,
    ValidationError,
)
from .model import ModelParams, SpotPoint
from .payoff import PayoffSpec

GRID_HALF_WIDTH_STD = 5.0
PSOR_OMEGA = 1.3
PSOR_TOL = 1e-9
PSOR_MAX_SWEEPS = 10_000
NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 100


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class LogGrid:
    """Uniform tensor grid in log-price, with a uniform time mesh on [0, T]."""

    axes: tuple
    times: np.ndarray

    def __post_init__(self):
        for ax in self.axes:
            ax.setflags(write=False)
        self.times.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] for ax in self.axes])

    @property
    def lo(self) -> np.ndarray:
        return np.array([ax[0] for ax in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([ax[-1] for ax in self.axes])

    @property
    def time_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def log_nodes(self) -> np.ndarray:
        """All node coordinates in log-price, shape (size, n), C-order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def spots(self) -> np.ndarray:
        """All node coordinates in price space, shape (size, n)."""
        return np.exp(self.log_nodes())

    def interior_mask(self) -> np.ndarray:
        """Boolean array over nodes, False on the truncation boundary."""
        mask = np.ones(self.shape, dtype=bool)
        for k in range(self.n):
            idx = [slice(None)] * self.n
            idx[k] = 0
            mask[tuple(idx)] = False
            idx[k] = -1
            mask[tuple(idx)] = False
        return mask


def build_grid(params: ModelParams, spot: SpotPoint, nodes_per_axis: int | Sequence[int],
               time_steps: int) -> LogGrid:
    """Grid centered so log(spot) is a node, half-width 5 sqrt(a_ii T) per axis."""
    n = params.n
    if spot.n != n:
        raise ValidationError(f"spot has {spot.n} assets, model has {n}")
    if n > 2:
        raise UnsupportedDimensionError(
            f"grid solver supports n <= 2, got n={n}; use the regression-based "
            "exercise rule for higher dimensions"
        )
    counts = np.broadcast_to(np.asarray(nodes_per_axis, dtype=int), (n,))
    for c in counts:
        if c < 51 or c % 2 == 0:
            raise ValidationError(f"nodes_per_axis must be odd and >= 51, got {c}")
    if time_steps < 50:
        raise ValidationError(f"time_steps must be >= 50, got {time_steps}")
    y0 = np.log(spot.x)
    half = GRID_HALF_WIDTH_STD * np.sqrt(np.diag(params.a) * params.T)
    axes = tuple(
        np.linspace(y0[k] - half[k], y0[k] + half[k], counts[k]) for k in range(n)
    )
    times = np.linspace(0.0, params.T, time_steps + 1)
    return LogGrid(axes=axes, times=times)


# ---------------------------------------------------------------------------
# operator assembly

def _axis_d1(m: int, h: float) -> sp.csr_matrix:
    e = np.ones(m)
    d = sp.diags([-e / (2 * h), e / (2 * h)], [-1, 1], shape=(m, m), format="lil")
    d[0, :] = 0.0
    d[-1, :] = 0.0
    return d.tocsr()


def _axis_d2(m: int, h: float) -> sp.csr_matrix:
    e = np.ones(m)
    d = sp.diags([e / h**2, -2 * e / h**2, e / h**2], [-1, 0, 1], shape=(m, m),
                 format="lil")
    d[0, :] = 0.0
    d[-1, :] = 0.0
    return d.tocsr()


def build_operators(params: ModelParams, grid: LogGrid, theta: float):
    """The two theta-scheme matrices (M_L, M_R) over flattened grid nodes.

    Backward step: solve ``min(u - psi, M_L u - M_R u_next) = 0``. Boundary
    rows are identity in both, which keeps Dirichlet values pinned at psi.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValidationError(f"theta must be in [0.5, 1], got {theta}")
    n = grid.n
    shape = grid.shape
    h = grid.h
    b = params.log_drift
    a = params.a

    eyes = [sp.identity(m, format="csr") for m in shape]

    def lift(op: sp.spmatrix, axis: int) -> sp.csr_matrix:
        factors = [eyes[k] if k != axis else op for k in range(n)]
        out = factors[0]
        for f in factors[1:]:
            out = sp.kron(out, f, format="csr")
        return out

    gen = sp.csr_matrix((grid.size, grid.size))
    for k in range(n):
        gen = gen + b[k] * lift(_axis_d1(shape[k], h[k]), k)
        gen = gen + 0.5 * a[k, k] * lift(_axis_d2(shape[k], h[k]), k)
    for k in range(n):
        for l in range(k + 1, n):
            cross = sp.kron(_axis_d1(shape[k], h[k]), _axis_d1(shape[l], h[l]),
                            format="csr")
            gen = gen + a[k, l] * cross
    interior = grid.interior_mask().ravel().astype(np.float64)
    gen = gen - params.r * sp.diags(interior)

    eye = sp.identity(grid.size, format="csr")
    dt = grid.dt
    m_left = (eye - dt * theta * gen).tocsr()
    m_right = (eye + dt * (1.0 - theta) * gen).tocsr()
    m_left.sort_indices()
    m_right.sort_indices()
    return m_left, m_right


# ---------------------------------------------------------------------------
# projected SOR kernel


@njit(cache=True)
def _psor(indptr, indices, data, diag, b, psi, u, omega, tol, max_sweeps):
    m = u.shape[0]
    for sweep in range(max_sweeps):
        delta = 0.0
        for i in range(m):
            s = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s -= data[k] * u[j]
            gs = s / diag[i]
            un = u[i] + omega * (gs - u[i])
            if un < psi[i]:
                un = psi[i]
            step = abs(un - u[i])
            if step > delta:
                delta = step
            u[i] = un
        if delta <= tol:
            return sweep + 1
    return -max_sweeps


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class ValueSurface:
    """Value of the option on the grid: ``values[m]`` is u(times[m], .).

    ``values`` has shape (time_steps + 1,) + grid.shape; ``psi`` is the
    payoff sampled at the nodes. LCP surfaces satisfy u >= psi nodewise and
    u(T, .) = psi exactly; penalized surfaces may undershoot by O(1/n).
    """

    grid: LogGrid
    values: np.ndarray
    psi: np.ndarray
    params: ModelParams
    spec: PayoffSpec
    kind: str  # "lcp" | "penalized"

    def __post_init__(self):
        self.values.setflags(write=False)
        self.psi.setflags(write=False)

    def level(self, m: int) -> np.ndarray:
        return self.values[m]

    def gap(self) -> np.ndarray:
        """u - psi at every node and time level."""
        return self.values - self.psi[None, ...]


def _payoff_on_grid(spec: PayoffSpec, grid: LogGrid) -> np.ndarray:
    return np.asarray(spec.value(grid.spots())).reshape(grid.shape)


def solve_lcp(params: ModelParams, spec: PayoffSpec, grid: LogGrid,
              theta: float = 0.5, *, omega: float = PSOR_OMEGA,
              tol: float = PSOR_TOL, max_sweeps: int = PSOR_MAX_SWEEPS) -> ValueSurface:
    """Backward theta-scheme with a projected-SOR LCP solve per time step."""
    m_left, m_right = build_operators(params, grid, theta)
    diag = m_left.diagonal()
    psi_flat = _payoff_on_grid(spec, grid).ravel()

    steps = grid.time_steps
    values = np.empty((steps + 1,) + grid.shape)
    u = psi_flat.copy()
    values[steps] = psi_flat.reshape(grid.shape)
    for m in range(steps - 1, -1, -1):
        rhs = m_right @ u
        sweeps = _psor(m_left.indptr, m_left.indices, m_left.data, diag,
                       rhs, psi_flat, u, omega, tol, max_sweeps)
        if sweeps < 0:
            resid = np.minimum(u - psi_flat, m_left @ u - rhs)
            raise SolverFailureError(
                f"PSOR did not converge at time level {m} after {max_sweeps} sweeps; "
                f"complementarity residual sup-norm {np.abs(resid).max():.3e}"
            )
        values[m] = u.reshape(grid.shape)
    return ValueSurface(grid=grid, values=values, psi=psi_flat.reshape(grid.shape),
                        params=params, spec=spec, kind="lcp")


def solve_penalized(params: ModelParams, spec: PayoffSpec, grid: LogGrid,
                    theta: float = 0.5, penalty: float = 1e7, *,
                    tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> ValueSurface:
    """Backward theta-scheme for u_t + Lu = ru - n (u - psi)-.

    The differential operator is theta-weighted; the stiff penalty term is
    taken fully implicitly (weight dt on the new level) and handled by
    semi-smooth Newton per time step. With the implicit treatment the large-n
    limit of each step is exactly the step LCP, so the solution increases
    to the projected surface as n grows. The returned surface is NOT
    projected onto the obstacle; it may undershoot psi by O(1/n).
    ``penalty = 0`` reduces to the plain European backward solve.
    """
    if penalty < 0.0:
        raise ValidationError(f"penalty must be >= 0, got {penalty}")
    m_left, m_right = build_operators(params, grid, theta)
    psi_flat = _payoff_on_grid(spec, grid).ravel()
    dt = grid.dt

    steps = grid.time_steps
    values = np.empty((steps + 1,) + grid.shape)
    u = psi_flat.copy()
    values[steps] = psi_flat.reshape(grid.shape)

    lu_plain = splu(m_left.tocsc()) if penalty == 0.0 else None
    for m in range(steps - 1, -1, -1):
        rhs = m_right @ u
        if penalty == 0.0:
            u = lu_plain.solve(rhs)
        else:
            u = _penalty_newton(m_left, dt * penalty, psi_flat, rhs, u,
                                tol, max_iter, m)
        values[m] = u.reshape(grid.shape)
    return ValueSurface(grid=grid, values=values, psi=psi_flat.reshape(grid.shape),
                        params=params, spec=spec, kind="penalized")


def _penalty_newton(m_left, pen_dt, psi, rhs, u_init, tol, max_iter, level):
    u = u_init.copy()
    for _ in range(max_iter):
        shortfall = np.maximum(psi - u, 0.0)
        f = m_left @ u - pen_dt * shortfall - rhs
        active = (u < psi).astype(np.float64)
        jac = m_left + pen_dt * sp.diags(active)
        step = splu(jac.tocsc()).solve(-f)
        u = u + step
        if np.abs(step).max() <= tol:
            return u
    raise SolverFailureError(
        f"penalty Newton did not converge at time level {level} after {max_iter} "
        f"iterations; last step sup-norm {np.abs(step).max():.3e}"
    )


# ---------------------------------------------------------------------------
# interpolation


def _axis_locate(ax: np.ndarray, q: np.ndarray):
    h = ax[1] - ax[0]
    idx = np.clip(np.floor((q - ax[0]) / h).astype(np.int64), 0, len(ax) - 2)
    wgt = (q - ax[idx]) / h
    return idx, wgt


def _interp_space(grid: LogGrid, arr: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of nodal array ``arr`` at log-points ``y`` (batch, n)."""
    if grid.n == 1:
        idx, w = _axis_locate(grid.axes[0], y[:, 0])
        return (1.0 - w) * arr[idx] + w * arr[idx + 1]
    i0, w0 = _axis_locate(grid.axes[0], y[:, 0])
    i1, w1 = _axis_locate(grid.axes[1], y[:, 1])
    return ((1 - w0) * (1 - w1) * arr[i0, i1]
            + (1 - w0) * w1 * arr[i0, i1 + 1]
            + w0 * (1 - w1) * arr[i0 + 1, i1]
            + w0 * w1 * arr[i0 + 1, i1 + 1])


def _time_locate(grid: LogGrid, t: float):
    dt = grid.dt
    m = int(np.clip(np.floor(t / dt), 0, grid.time_steps - 1))
    w = (t - grid.times[m]) / dt
    return m, float(np.clip(w, 0.0, 1.0))


def _check_bounds(grid: LogGrid, t: float, y: np.ndarray):
    T = grid.times[-1]
    if t < -1e-12 or t > T + 1e-12:
        raise ExtrapolationError(f"time {t} outside [0, {T}]")
    lo, hi = grid.lo, grid.hi
    if np.any(y < lo - 1e-12) or np.any(y > hi + 1e-12):
        raise ExtrapolationError(
            f"query log-point outside grid box [{lo}, {hi}]"
        )


def value_at(surface: ValueSurface, t: float, x: np.ndarray) -> float:
    """u(t, x) by multilinear interpolation in log-space, linear in time."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.log(x)[None, :]
    grid = surface.grid
    _check_bounds(grid, t, y[0])
    m, w = _time_locate(grid, t)
    v0 = _interp_space(grid, surface.values[m], y)[0]
    v1 = _interp_space(grid, surface.values[m + 1], y)[0]
    return float((1.0 - w) * v0 + w * v1)


def delta(surface: ValueSurface, params: ModelParams, t: float,
          x: np.ndarray) -> np.ndarray:
    """The length-n vector sigma(x) u_x, with sigma(x)_ij = sigma_ij x_i.

    Nodal derivatives are central differences in log space, mapped back via
    du/dx_i = dv/dy_i / x_i and interpolated at the query point.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.log(x)[None, :]
    grid = surface.grid
    _check_bounds(grid, t, y[0])
    m, w = _time_locate(grid, t)
    h = grid.h
    u_y = np.empty(grid.n)
    for k in range(grid.n):
        g0 = np.gradient(surface.values[m], h[k], axis=k)
        g1 = np.gradient(surface.values[m + 1], h[k], axis=k)
        u_y[k] = (1.0 - w) * _interp_space(grid, g0, y)[0] \
            + w * _interp_space(grid, g1, y)[0]
    u_x = u_y / x
    return x * (params.sigma @ u_x)


# ---------------------------------------------------------------------------
# exercise region


@dataclass(frozen=True)
class ExerciseRegion:
    """Threshold region {u - psi <= eps} intersected with {psi > 0}.

    ``masks[m]`` flags nodes at time level m. For t < T the truncation
    boundary ring is excluded (u = psi there is the Dirichlet condition, not
    an exercise decision); at t = T the payoff is the value everywhere, so
    all nodes are flagged. Off-grid membership evaluates the interpolated
    u - psi against eps (never interpolates the mask) with the query clamped
    to the interior box, and requires psi(x) > 0 at the exact query point.
    """

    surface: ValueSurface
    eps: float
    masks: np.ndarray
    gap: np.ndarray  # cached u - psi, same shape as surface.values

    def __post_init__(self):
        self.masks.setflags(write=False)
        self.gap.setflags(write=False)

    @property
    def grid(self) -> LogGrid:
        return self.surface.grid

    def empty_before_expiry(self) -> bool:
        return not self.masks[:-1].any()

    def contains(self, t: float, x: np.ndarray) -> np.ndarray:
        """Vectorized membership for spots ``x`` of shape (batch, n) at time t."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        grid = self.grid
        y = np.log(x)
        for k in range(grid.n):
            np.clip(y[:, k], grid.axes[k][1], grid.axes[k][-2], out=y[:, k])
        m, w = _time_locate(grid, t)
        gap_t = (1.0 - w) * self.gap[m] + w * self.gap[m + 1]
        val = _interp_space(grid, gap_t, y)
        psi_x = np.asarray(self.surface.spec.value(x))
        return (val <= self.eps) & (psi_x > 0.0)

    def boundary_1d(self) -> np.ndarray:
        """For 1-D grids: largest in-region spot per time level (NaN if none)."""
        if self.grid.n != 1:
            raise ValidationError("boundary_1d is defined for 1-D grids only")
        spots = np.exp(self.grid.axes[0])
        out = np.full(self.masks.shape[0], np.nan)
        for m in range(self.masks.shape[0]):
            idx = np.nonzero(self.masks[m])[0]
            if idx.size:
                out[m] = spots[idx.max()]
        return out


def default_exercise_eps(spec: PayoffSpec) -> float:
    return 1e-6 * (1.0 + spec.k_scale)


def exercise_region(surface: ValueSurface, eps: float | None = None) -> ExerciseRegion:
    """Extract the exercise region from an LCP surface.

    ``eps`` defaults to 1e-6 * (1 + strike scale); below that, membership is
    dominated by solver tolerance rather than geometry.
    """
    if surface.kind != "lcp":
        raise ValidationError("exercise_region expects a surface from solve_lcp")
    if eps is None:
        eps = default_exercise_eps(surface.spec)
    gap = surface.gap()
    psi_pos = surface.psi > 0.0
    interior = surface.grid.interior_mask()
    masks = (gap <= eps) & psi_pos[None, ...] & interior[None, ...]
    masks[-1] = gap[-1] <= eps  # u(T) = psi: every node
    return ExerciseRegion(surface=surface, eps=float(eps), masks=masks, gap=gap)


# ---------------------------------------------------------------------------
# CSV export


def surface_to_csv(surface: ValueSurface, region: ExerciseRegion | None,
                   path: str) -> None:
    """One row per (time level, node): t, x..., u, psi, in_region."""
    grid = surface.grid
    spots = grid.spots()
    psi = surface.psi.ravel()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{k+1}" for k in range(grid.n)]
                        + ["u", "psi", "in_region"])
        for m, t in enumerate(grid.times):
            vals = surface.values[m].ravel()
            mask = region.masks[m].ravel() if region is not None else None
            for i in range(grid.size):
                row = [f"{t:.12g}"] + [f"{s:.12g}" for s in spots[i]]
                row += [f"{vals[i]:.12g}", f"{psi[i]:.12g}"]
                row.append(str(int(mask[i])) if mask is not None else "")
                writer.writerow(row)


def region_to_csv(region: ExerciseRegion, path: str) -> None:
    """Per time level: t, in-region node count, and (1-D) the boundary spot."""
    grid = region.grid
    boundary = region.boundary_1d() if grid.n == 1 else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", "in_region_count"]
        if boundary is not None:
            header.append("boundary_x")
        writer.writerow(header)
        for m, t in enumerate(grid.times):
            row = [f"{t:.12g}", str(int(region.masks[m].sum()))]
            if boundary is not None:
                row.append("" if np.isnan(boundary[m]) else f"{boundary[m]:.12g}")
            writer.writerow(row)
