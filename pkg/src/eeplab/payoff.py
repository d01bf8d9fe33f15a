"""Payoff catalog and closed-form early-exercise premium densities.

Six families: index call/put, call on max, put on min, multiple-strike,
and power-product. Each carries

* ``value(x)`` -- the payoff itself,
* ``premium_density(params, x)`` -- the nonnegative local rate at which
  holding instead of exercising loses value inside the exercise region
  (the negative part of ``-r*psi + L_BS*psi`` with ``L_BS`` the pricing
  generator ``sum (r-d_i) x_i d_i + 1/2 sum a_ij x_i x_j d_ij``),
* ``kink_distance(x)`` -- Euclidean distance to the nearest surface where
  the payoff is not smooth.

The closed forms are meaningful on ``{psi > 0}`` (exercise never happens
where the payoff is zero); off that set the same expression is returned for
total-function safety but carries no claim.

``density_oracle`` rebuilds the density from central finite differences of
the payoff alone and is the independent check used by the test suite.

Argmax/argmin ties are broken by lowest index, which only affects a
measure-zero set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleInvalidError, ValidationError
from .model import ModelParams

_SQRT2 = np.sqrt(2.0)


def _as_batch(x: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[-1] != n:
        raise ValidationError(f"spot vector has {xb.shape[-1]} assets, expected {n}")
    return xb, scalar


def _unbatch(v: np.ndarray, scalar: bool):
    return float(v[0]) if scalar else v


@dataclass(frozen=True)
class IndexCall:
    """psi(x) = (w . x - K)+"""

    w: np.ndarray
    K: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=np.float64)).copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "K", float(self.K))
        if self.K <= 0.0:
            raise ValidationError(f"strike must be > 0, got {self.K}")

    family = "index_call"
    convex = True

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def k_scale(self) -> float:
        return self.K

    def value(self, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.maximum(xb @ self.w - self.K, 0.0), scalar)

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.maximum(xb @ (self.w * params.d) - params.r * self.K, 0.0), scalar)

    def kink_distance(self, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.abs(xb @ self.w - self.K) / np.linalg.norm(self.w), scalar)


@dataclass(frozen=True)
class IndexPut:
    """psi(x) = (K - w . x)+"""

    w: np.ndarray
    K: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=np.float64)).copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "K", float(self.K))
        if self.K <= 0.0:
            raise ValidationError(f"strike must be > 0, got {self.K}")

    family = "index_put"
    convex = True

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def k_scale(self) -> float:
        return self.K

    def value(self, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.maximum(self.K - xb @ self.w, 0.0), scalar)

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.maximum(params.r * self.K - xb @ (self.w * params.d), 0.0), scalar)

    def kink_distance(self, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.abs(xb @ self.w - self.K) / np.linalg.norm(self.w), scalar)


def _pairwise_gap(xb: np.ndarray) -> np.ndarray:
    # smallest |x_i - x_j| over pairs, scaled to a Euclidean distance
    n = xb.shape[-1]
    if n == 1:
        return np.full(xb.shape[0], np.inf)
    gaps = np.abs(xb[:, :, None] - xb[:, None, :]) / _SQRT2
    iu = np.triu_indices(n, k=1)
    return gaps[:, iu[0], iu[1]].min(axis=1)


@dataclass(frozen=True)
class MaxCall:
    """psi(x) = (max_i x_i - K)+"""

    K: float

    def __post_init__(self):
        object.__setattr__(self, "K", float(self.K))
        if self.K <= 0.0:
            raise ValidationError(f"strike must be > 0, got {self.K}")

    family = "max_call"
    convex = True
    n = None  # any number of assets

    @property
    def k_scale(self) -> float:
        return self.K

    def value(self, x):
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        return _unbatch(np.maximum(xb.max(axis=-1) - self.K, 0.0), scalar)

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, params.n)
        leader = np.argmax(xb, axis=-1)  # first max: lowest-index tie-break
        rows = np.arange(xb.shape[0])
        val = params.d[leader] * xb[rows, leader] - params.r * self.K
        return _unbatch(np.maximum(val, 0.0), scalar)

    def kink_distance(self, x):
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        dist = np.minimum(_pairwise_gap(xb), np.abs(xb.max(axis=-1) - self.K))
        return _unbatch(dist, scalar)


@dataclass(frozen=True)
class MinPut:
    """psi(x) = (K - min_i x_i)+"""

    K: float

    def __post_init__(self):
        object.__setattr__(self, "K", float(self.K))
        if self.K <= 0.0:
            raise ValidationError(f"strike must be > 0, got {self.K}")

    family = "min_put"
    convex = True
    n = None

    @property
    def k_scale(self) -> float:
        return self.K

    def value(self, x):
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        return _unbatch(np.maximum(self.K - xb.min(axis=-1), 0.0), scalar)

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, params.n)
        leader = np.argmin(xb, axis=-1)
        rows = np.arange(xb.shape[0])
        val = params.r * self.K - params.d[leader] * xb[rows, leader]
        return _unbatch(np.maximum(val, 0.0), scalar)

    def kink_distance(self, x):
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        dist = np.minimum(_pairwise_gap(xb), np.abs(xb.min(axis=-1) - self.K))
        return _unbatch(dist, scalar)


@dataclass(frozen=True)
class MultiStrike:
    """psi(x) = (max_i (x_i - K_i))+"""

    K: np.ndarray

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=np.float64)).copy()
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        if np.any(K <= 0.0):
            raise ValidationError(f"all strikes must be > 0, got {K}")

    family = "multi_strike"
    convex = True

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def k_scale(self) -> float:
        return float(self.K.max())

    def value(self, x):
        xb, scalar = _as_batch(x, self.n)
        return _unbatch(np.maximum((xb - self.K).max(axis=-1), 0.0), scalar)

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, self.n)
        leader = np.argmax(xb - self.K, axis=-1)
        rows = np.arange(xb.shape[0])
        val = params.d[leader] * xb[rows, leader] - params.r * self.K[leader]
        return _unbatch(np.maximum(val, 0.0), scalar)

    def kink_distance(self, x):
        xb, scalar = _as_batch(x, self.n)
        shifted = xb - self.K
        dist = np.minimum(_pairwise_gap(shifted), np.abs(shifted.max(axis=-1)))
        return _unbatch(dist, scalar)


@dataclass(frozen=True)
class PowerProduct:
    """psi(x) = ((x_1 * ... * x_n)^gamma - K)+ on the positive orthant."""

    gamma: float
    K: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "K", float(self.K))
        if self.gamma <= 0.0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if self.K <= 0.0:
            raise ValidationError(f"strike must be > 0, got {self.K}")

    family = "power_product"
    convex = False  # not convex for general gamma; smooth off {f = K}
    n = None

    @property
    def k_scale(self) -> float:
        return self.K

    def _f(self, xb: np.ndarray) -> np.ndarray:
        return np.prod(xb, axis=-1) ** self.gamma

    def value(self, x):
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        return _unbatch(np.maximum(self._f(xb) - self.K, 0.0), scalar)

    def density_coefficient(self, params: ModelParams) -> float:
        """Coefficient c in psi-density (c * f(x) - r K)+.

        Derived from the generator acting on f: x_i df/dx_i = gamma f,
        x_i x_j d2f/dx_i dx_j = gamma^2 f (i != j) and gamma (gamma - 1) f
        (i == j), so the second-order terms carry the usual 1/2 factors:

            c = r - gamma * sum_i (r - d_i - a_ii / 2) - gamma^2 / 2 * sum_ij a_ij.
        """
        g = self.gamma
        return float(
            params.r
            - g * np.sum(params.r - params.d - 0.5 * np.diag(params.a))
            - 0.5 * g * g * params.a.sum()
        )

    def premium_density(self, params: ModelParams, x):
        xb, scalar = _as_batch(x, params.n)
        c = self.density_coefficient(params)
        return _unbatch(np.maximum(c * self._f(xb) - params.r * self.K, 0.0), scalar)

    def kink_distance(self, x):
        # distance to the surface f(x) = K, estimated as |f - K| / |grad f|
        xb, scalar = _as_batch(x, np.asarray(x).shape[-1])
        f = self._f(xb)
        grad_norm = self.gamma * f * np.sqrt((xb ** -2).sum(axis=-1))
        return _unbatch(np.abs(f - self.K) / np.maximum(grad_norm, 1e-300), scalar)


PayoffSpec = IndexCall | IndexPut | MaxCall | MinPut | MultiStrike | PowerProduct

FAMILIES = {
    "index_call": IndexCall,
    "index_put": IndexPut,
    "max_call": MaxCall,
    "min_put": MinPut,
    "multi_strike": MultiStrike,
    "power_product": PowerProduct,
}


def evaluate(spec: PayoffSpec, x: np.ndarray):
    """Payoff value(s) at spot vector(s) ``x``."""
    return spec.value(x)


def premium_density(spec: PayoffSpec, params: ModelParams, x: np.ndarray):
    """Closed-form premium density at spot vector(s) ``x``."""
    return spec.premium_density(params, x)


def density_oracle(spec: PayoffSpec, params: ModelParams, x: np.ndarray,
                   h: float) -> float:
    """Premium density rebuilt from central finite differences of the payoff.

    Evaluates ``-r psi + sum (r - d_i) x_i D_i psi + 1/2 sum a_ij x_i x_j D_ij psi``
    with bump ``h`` per axis and returns the negative part. Independent of
    every closed form above; only the payoff itself is sampled.

    Raises
    ------
    OracleInvalidError
        If ``x`` is within ``10 h`` of a kink surface of the payoff (the
        stencil would straddle a non-smooth point).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("density_oracle expects a single spot vector")
    if h <= 0.0:
        raise ValidationError(f"bump size must be > 0, got {h}")
    dist = spec.kink_distance(x)
    if dist <= 10.0 * h:
        raise OracleInvalidError(
            f"point at kink distance {dist:.3e} <= 10 h = {10 * h:.3e}"
        )
    n = x.shape[0]
    r, d, a = params.r, params.d, params.a
    psi0 = spec.value(x)
    gen = -r * psi0
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        up, dn = spec.value(x + ei), spec.value(x - ei)
        first = (up - dn) / (2.0 * h)
        second = (up - 2.0 * psi0 + dn) / (h * h)
        gen += (r - d[i]) * x[i] * first
        gen += 0.5 * a[i, i] * x[i] * x[i] * second
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            cross = (
                spec.value(x + ei + ej) - spec.value(x + ei - ej)
                - spec.value(x - ei + ej) + spec.value(x - ei - ej)
            ) / (4.0 * h * h)
            gen += a[i, j] * x[i] * x[j] * cross
    return max(-gen, 0.0)
