"""Monte Carlo engine: exact path simulation, European pricing, the
discounted premium integral, and a least-squares regression price.

All randomness comes from the counter-based generator in :mod:`eeplab.rng`,
so results are bit-identical for a given (seed, stream, path index)
regardless of chunking or thread count. Streams keep the estimators
independent of each other:

    0  premium-integral paths
    1  European terminal draws
    2  regression training paths (pricing batch uses stream 3)

Antithetic pairing maps path ``2j+1`` to the negated draws of path ``2j``;
statistics then treat each pair mean as one sample.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from . import rng
from .errors import ValidationError
from .model import ModelParams, SpotPoint
from .payoff import PayoffSpec

STREAM_PREMIUM = 0
STREAM_EUROPEAN = 1
STREAM_LSMC_TRAIN = 2

DEFAULT_CHUNK = 1 << 16
MIN_SAMPLES = 1_000

RegionCallback = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its Monte Carlo standard error."""

    value: float
    stderr: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < MIN_SAMPLES:
            raise ValidationError(
                f"estimate needs >= {MIN_SAMPLES} samples, got {self.n_samples}"
            )

    def interval(self, mult: float = 3.0) -> tuple[float, float]:
        return self.value - mult * self.stderr, self.value + mult * self.stderr


def _estimate_from_sums(total: float, total_sq: float, n: int) -> Estimate:
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return Estimate(value=mean, stderr=float(np.sqrt(var / n)), n_samples=n)


def _pair_means(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[0::2] + values[1::2])


def estimate_from_values(values: np.ndarray, antithetic: bool) -> Estimate:
    samples = _pair_means(values) if antithetic else values
    n = samples.shape[0]
    return _estimate_from_sums(float(samples.sum()),
                               float((samples * samples).sum()), n)


# ---------------------------------------------------------------------------
# path simulation


@dataclass(frozen=True)
class PathBatch:
    """Exact GBM paths on a uniform mesh.

    ``spots[p, k, i]`` is asset i of path ``path_offset + p`` at ``times[k]``.
    Rebuilding any path in isolation needs only (seed, stream, path index,
    antithetic flag).
    """

    times: np.ndarray
    spots: np.ndarray
    seed: int
    stream: int
    path_offset: int
    antithetic: bool

    def __post_init__(self):
        self.times.setflags(write=False)
        self.spots.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.spots.shape[0]

    @property
    def steps(self) -> int:
        return self.spots.shape[1] - 1

    @property
    def n(self) -> int:
        return self.spots.shape[2]


def _draw_normals(seed: int, stream: int, path0: int, n_paths: int, n_draws: int,
                  antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.normals(seed, stream, path0, n_paths, n_draws)
    if path0 % 2 or n_paths % 2:
        raise ValidationError("antithetic runs need even path offsets and counts")
    base = rng.normals(seed, stream, path0 // 2, n_paths // 2, n_draws)
    z = np.repeat(base, 2, axis=0)
    z[1::2] *= -1.0
    return z


def simulate_paths(params: ModelParams, spot: SpotPoint, steps: int, n_paths: int,
                   seed: int, *, stream: int = STREAM_PREMIUM, path_offset: int = 0,
                   antithetic: bool = False) -> PathBatch:
    """Simulate exact lognormal paths from (spot.s, spot.x) to T.

    No discretization bias: each increment is an exact step. Draw ``q`` of
    path ``p`` is the normal for (seed, stream, p, q), step-major over assets.
    """
    if steps < 10:
        raise ValidationError(f"steps must be >= 10, got {steps}")
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    spot.require_before(params.T)
    if spot.n != params.n:
        raise ValidationError(f"spot has {spot.n} assets, model has {params.n}")
    n = params.n
    horizon = params.T - spot.s
    dt = horizon / steps
    times = spot.s + horizon * np.arange(steps + 1) / steps

    z = _draw_normals(seed, stream, path_offset, n_paths, steps * n, antithetic)
    z = z.reshape(n_paths, steps, n)
    increments = params.log_drift * dt + np.sqrt(dt) * (z @ params.sigma.T)
    log_paths = np.log(spot.x) + np.cumsum(increments, axis=1)
    spots = np.empty((n_paths, steps + 1, n))
    spots[:, 0, :] = spot.x
    np.exp(log_paths, out=spots[:, 1:, :])
    return PathBatch(times=times, spots=spots, seed=seed, stream=stream,
                     path_offset=path_offset, antithetic=antithetic)


def paths_to_csv(batch: PathBatch, path: str, max_paths: int | None = None) -> None:
    """Debug dump: one row per (path id, time): path, t, x..."""
    count = batch.n_paths if max_paths is None else min(batch.n_paths, max_paths)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "t"] + [f"x{k+1}" for k in range(batch.n)])
        for p in range(count):
            for k, t in enumerate(batch.times):
                writer.writerow([str(batch.path_offset + p), f"{t:.12g}"]
                                + [f"{v:.12g}" for v in batch.spots[p, k]])


# ---------------------------------------------------------------------------
# European pricing


def price_european(params: ModelParams, spec: PayoffSpec, spot: SpotPoint,
                   n_paths: int, seed: int, *, stream: int = STREAM_EUROPEAN,
                   antithetic: bool = False,
                   chunk_size: int = DEFAULT_CHUNK) -> Estimate:
    """Discounted terminal-payoff mean, sampled exactly in one step to T."""
    spot.require_before(params.T)
    tau = params.T - spot.s
    disc = np.exp(-params.r * tau)
    n = params.n
    if antithetic and n_paths % 2:
        raise ValidationError("antithetic runs need an even path count")
    chunk_size = max(2, chunk_size - chunk_size % 2)

    drift = params.log_drift * tau
    total = total_sq = 0.0
    count = 0
    done = 0
    while done < n_paths:
        c = min(chunk_size, n_paths - done)
        z = _draw_normals(seed, stream, done, c, n, antithetic)
        xt = spot.x * np.exp(drift + np.sqrt(tau) * (z @ params.sigma.T))
        values = disc * np.asarray(spec.value(xt))
        samples = _pair_means(values) if antithetic else values
        total += float(samples.sum())
        total_sq += float((samples * samples).sum())
        count += samples.shape[0]
        done += c
    return _estimate_from_sums(total, total_sq, count)


# ---------------------------------------------------------------------------
# premium integral


def _premium_pathwise(params: ModelParams, spec: PayoffSpec, times: np.ndarray,
                      spots: np.ndarray, region: RegionCallback,
                      s: float) -> np.ndarray:
    """Trapezoidal integral of e^{-r(t-s)} 1_region psi-density along each path."""
    steps = len(times) - 1
    dt = times[1] - times[0]
    acc = np.zeros(spots.shape[0])
    for k in range(steps + 1):
        w = dt if 0 < k < steps else 0.5 * dt
        t = float(times[k])
        xk = spots[:, k, :]
        mask = np.asarray(region(t, xk), dtype=bool)
        if not mask.any():
            continue
        density = np.asarray(spec.premium_density(params, xk))
        acc += (w * np.exp(-params.r * (t - s))) * np.where(mask, density, 0.0)
    return acc


def estimate_premium(params: ModelParams, spec: PayoffSpec, paths: PathBatch,
                     region: RegionCallback) -> Estimate:
    """Early-exercise premium estimate from a materialized path batch.

    The indicator is evaluated at mesh points; the trapezoid treats the
    integrand as piecewise linear between them. Pathwise the integrand is
    nonnegative, so the estimate is too.
    """
    values = _premium_pathwise(params, spec, paths.times, paths.spots, region,
                               float(paths.times[0]))
    return estimate_from_values(values, paths.antithetic)


def premium_streamed(params: ModelParams, spec: PayoffSpec, spot: SpotPoint,
                     mesh_steps: int, n_paths: int, seed: int,
                     region: RegionCallback, *, stream: int = STREAM_PREMIUM,
                     antithetic: bool = False,
                     chunk_size: int = DEFAULT_CHUNK) -> Estimate:
    """Premium estimate over paths simulated and integrated in chunks.

    Identical pathwise values to a monolithic batch (draws are addressed by
    global path index); memory stays bounded by the chunk size.
    """
    if antithetic and n_paths % 2:
        raise ValidationError("antithetic runs need an even path count")
    chunk_size = max(2, chunk_size - chunk_size % 2)
    total = total_sq = 0.0
    count = 0
    done = 0
    while done < n_paths:
        c = min(chunk_size, n_paths - done)
        batch = simulate_paths(params, spot, mesh_steps, c, seed, stream=stream,
                               path_offset=done, antithetic=antithetic)
        values = _premium_pathwise(params, spec, batch.times, batch.spots, region,
                                   spot.s)
        samples = _pair_means(values) if antithetic else values
        total += float(samples.sum())
        total_sq += float((samples * samples).sum())
        count += samples.shape[0]
        done += c
    return _estimate_from_sums(total, total_sq, count)


# ---------------------------------------------------------------------------
# least-squares Monte Carlo


def _monomial_powers(n: int, degree: int) -> list[tuple[int, ...]]:
    return [p for p in product(range(degree + 1), repeat=n) if sum(p) <= degree]


def _basis(xb: np.ndarray, spec: PayoffSpec, degree: int, scale: float) -> np.ndarray:
    """Polynomial basis of total degree <= degree in x/scale, plus the payoff."""
    b = xb / scale
    cols = [np.prod(b ** np.array(p), axis=-1) for p in _monomial_powers(b.shape[-1], degree)]
    cols.append(np.asarray(spec.value(xb)) / scale)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class StoppingRule:
    """Per-date exercise rule from the regression: exercise at date k iff the
    payoff is positive and at least the estimated continuation value.

    Usable as a region callback for arbitrary t (mapped to the nearest date),
    including dimensions beyond the grid solver's reach.
    """

    params: ModelParams
    spec: PayoffSpec
    times: np.ndarray
    coeffs: tuple  # per date: None or (coefficient vector, degree)
    scale: float

    def exercise_at(self, k: int, x: np.ndarray) -> np.ndarray:
        xb = np.atleast_2d(x)
        psi = np.asarray(self.spec.value(xb))
        last = len(self.times) - 1
        if k <= 0:
            return np.zeros(xb.shape[0], dtype=bool)
        if k >= last:
            return psi > 0.0
        entry = self.coeffs[k]
        if entry is None:
            return np.zeros(xb.shape[0], dtype=bool)
        beta, degree = entry
        cont = _basis(xb, self.spec, degree, self.scale) @ beta
        return (psi > 0.0) & (psi >= cont)

    def contains(self, t: float, x: np.ndarray) -> np.ndarray:
        dt = self.times[1] - self.times[0]
        k = int(round((t - self.times[0]) / dt))
        k = min(max(k, 0), len(self.times) - 1)
        return self.exercise_at(k, x)


def _fit_continuation(design_x: np.ndarray, target: np.ndarray, spec: PayoffSpec,
                      degree: int, scale: float):
    while degree >= 1:
        basis = _basis(design_x, spec, degree, scale)
        beta, _, rank, _ = np.linalg.lstsq(basis, target, rcond=None)
        if rank == basis.shape[1]:
            return beta, degree
        warnings.warn(
            f"regression design rank-deficient at degree {degree}; reducing",
            RuntimeWarning, stacklevel=3,
        )
        degree -= 1
    return beta, 1


def longstaff_schwartz(params: ModelParams, spec: PayoffSpec, paths: PathBatch,
                       degree: int = 3, *, pricing_paths: int | None = None
                       ) -> tuple[Estimate, StoppingRule]:
    """Regression-based price of the optimal stopping value.

    Fits continuation values backward on the in-the-money training paths
    (polynomial basis of total degree <= ``degree`` plus the payoff), then
    reprices on an independent batch simulated with the next stream id. The
    returned estimate is low-biased (a feasible but suboptimal rule).
    """
    if paths.steps < 25:
        raise ValidationError(f"need >= 25 exercise dates, got {paths.steps}")
    if degree < 1 or degree > 3:
        raise ValidationError(f"basis degree must be in 1..3, got {degree}")
    times = paths.times
    spots = paths.spots
    n_paths, last = spots.shape[0], paths.steps
    scale = spec.k_scale
    r = params.r

    n_cols = len(_monomial_powers(params.n, degree)) + 1
    cashflow = np.asarray(spec.value(spots[:, last, :]))
    pay_time = np.full(n_paths, times[last])
    coeffs: list = [None] * (last + 1)

    for k in range(last - 1, 0, -1):
        xk = spots[:, k, :]
        psi_k = np.asarray(spec.value(xk))
        itm = psi_k > 0.0
        if int(itm.sum()) < 2 * n_cols:
            continue
        target = cashflow[itm] * np.exp(-r * (pay_time[itm] - times[k]))
        beta, used_degree = _fit_continuation(xk[itm], target, spec, degree, scale)
        coeffs[k] = (beta, used_degree)
        cont = _basis(xk[itm], spec, used_degree, scale) @ beta
        exercise = np.zeros(n_paths, dtype=bool)
        exercise[itm] = psi_k[itm] >= cont
        cashflow[exercise] = psi_k[exercise]
        pay_time[exercise] = times[k]

    rule = StoppingRule(params=params, spec=spec, times=times,
                        coeffs=tuple(coeffs), scale=scale)

    n_price = paths.n_paths if pricing_paths is None else pricing_paths
    spot0 = SpotPoint(s=float(times[0]), x=spots[0, 0, :])
    pricing = simulate_paths(params, spot0, last, n_price, paths.seed,
                             stream=paths.stream + 1, antithetic=paths.antithetic)
    values = np.zeros(n_price)
    alive = np.ones(n_price, dtype=bool)
    for k in range(1, last + 1):
        if not alive.any():
            break
        stop = rule.exercise_at(k, pricing.spots[:, k, :]) & alive
        if stop.any():
            payoff = np.asarray(spec.value(pricing.spots[stop, k, :]))
            values[stop] = np.exp(-r * (times[k] - times[0])) * payoff
            alive &= ~stop
    return estimate_from_values(values, pricing.antithetic), rule
